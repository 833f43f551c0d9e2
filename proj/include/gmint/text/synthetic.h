#pragma once

#include "gmint/text/corpus.h"

namespace gmint::text {

// Generates a labelled corpus of space-separated pseudo-words.
//
// The vocabulary is `vocab_size` words "<prefix>NNNN". A seeded permutation
// ranks them for a shared Zipf unigram distribution; a second permutation
// splits them into num_classes disjoint blocks, each with its own Zipf
// distribution. Every token of a class-c sample is drawn from block c with
// probability class_signal_strength and from the shared distribution
// otherwise. Identical specs produce identical corpora.
Corpus synth_corpus(const SynthSpec& spec);

}  // namespace gmint::text
