#include "gmint/text/corpus.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "gmint/common/errors.h"
#include "json.hpp"

namespace gmint::text {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

struct RawRow {
  std::string id;
  std::string text;
  std::string label;
  std::size_t line;
};

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

Corpus assemble(std::vector<RawRow> rows, std::string name) {
  if (rows.empty()) throw ParseError("file contains no samples", 0);
  std::vector<std::string> distinct;
  {
    std::set<std::string> seen;
    for (const auto& r : rows)
      if (seen.insert(r.label).second) distinct.push_back(r.label);
  }
  bool numeric = std::all_of(distinct.begin(), distinct.end(), [](const std::string& s) {
    long long v;
    return parse_int(s, v);
  });
  if (numeric) {
    std::sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
      long long x, y;
      parse_int(a, x);
      parse_int(b, y);
      return x < y;
    });
  } else {
    std::sort(distinct.begin(), distinct.end());
  }

  Corpus c;
  c.name = std::move(name);
  c.num_classes = static_cast<int>(distinct.size());
  c.label_names = distinct;
  std::set<std::string> ids;
  for (auto& r : rows) {
    if (!ids.insert(r.id).second) throw ParseError("duplicate sample id '" + r.id + "'", r.line);
    int label = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), r.label,
                                                  [numeric](const std::string& a, const std::string& b) {
                                                    if (!numeric) return a < b;
                                                    long long x, y;
                                                    parse_int(a, x);
                                                    parse_int(b, y);
                                                    return x < y;
                                                  }) -
                                 distinct.begin());
    c.samples.push_back({std::move(r.id), std::move(r.text), label});
  }
  return c;
}

// Splits one RFC-4180 record. Returns false at end of input. `line` is
// advanced past every newline consumed, including quoted ones.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false, was_quoted = false;
  const std::size_t start_line = line;
  for (;;) {
    int ch = in.get();
    if (ch == std::char_traits<char>::eof()) {
      if (quoted) throw ParseError("unterminated quoted field", start_line);
      fields.push_back(std::move(field));
      return true;
    }
    char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || was_quoted) throw ParseError("stray quote inside unquoted field", line);
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '\r' && in.peek() == '\n') {
      continue;
    } else if (c == '\n') {
      ++line;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
}

}  // namespace

ordered_json synth_spec_to_json(const SynthSpec& s) {
  return ordered_json{{"name", s.name},
                      {"num_classes", s.num_classes},
                      {"samples_per_class", s.samples_per_class},
                      {"vocab_size", s.vocab_size},
                      {"class_signal_strength", s.class_signal_strength},
                      {"seed", s.seed},
                      {"min_tokens", s.min_tokens},
                      {"max_tokens", s.max_tokens},
                      {"zipf_exponent", s.zipf_exponent},
                      {"word_prefix", s.word_prefix}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.name = j.value("name", s.name);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.samples_per_class = j.value("samples_per_class", s.samples_per_class);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.class_signal_strength = j.value("class_signal_strength", s.class_signal_strength);
  s.seed = j.value("seed", s.seed);
  s.min_tokens = j.value("min_tokens", s.min_tokens);
  s.max_tokens = j.value("max_tokens", s.max_tokens);
  s.zipf_exponent = j.value("zipf_exponent", s.zipf_exponent);
  s.word_prefix = j.value("word_prefix", s.word_prefix);
  return s;
}

void Corpus::validate() const {
  if (name.empty() || name.find(':') != std::string::npos)
    throw DataError("corpus name must be non-empty and free of ':' (got '" + name + "')");
  if (samples.empty()) throw DataError("corpus '" + name + "' is empty");
  if (num_classes <= 0) throw DataError("corpus '" + name + "' has no classes");
  std::vector<bool> present(static_cast<std::size_t>(num_classes), false);
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw DataError("sample '" + s.id + "' has label " + std::to_string(s.label) + " outside [0, " +
                      std::to_string(num_classes) + ")");
    present[static_cast<std::size_t>(s.label)] = true;
    if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
  }
  for (std::size_t c = 0; c < present.size(); ++c)
    if (!present[c]) throw DataError("class " + std::to_string(c) + " has no samples in '" + name + "'");
}

std::unordered_map<std::string, std::size_t> Corpus::index_by_id() const {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) index.emplace(samples[i].id, i);
  return index;
}

Corpus ingest_csv(std::istream& in, std::string name) {
  std::size_t line = 1;
  std::vector<std::string> fields;
  if (!read_csv_record(in, fields, line) || (fields.size() == 1 && fields[0].empty()))
    throw ParseError("empty file", 1);
  auto column = [&](const char* col) -> long {
    auto it = std::find(fields.begin(), fields.end(), col);
    return it == fields.end() ? -1 : it - fields.begin();
  };
  const long text_col = column("text"), label_col = column("label"), id_col = column("id");
  if (text_col < 0) throw ParseError("missing column 'text'", 1);
  if (label_col < 0) throw ParseError("missing column 'label'", 1);
  const std::size_t width = fields.size();

  std::vector<RawRow> rows;
  for (;;) {
    const std::size_t record_line = line;
    if (!read_csv_record(in, fields, line)) break;
    if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
    if (fields.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()),
                       record_line);
    RawRow row;
    row.text = fields[static_cast<std::size_t>(text_col)];
    row.label = fields[static_cast<std::size_t>(label_col)];
    row.id = id_col >= 0 ? fields[static_cast<std::size_t>(id_col)] : std::to_string(rows.size());
    row.line = record_line;
    if (row.text.empty()) throw ParseError("empty text field", record_line);
    if (row.label.empty()) throw ParseError("empty label field", record_line);
    if (row.id.empty()) throw ParseError("empty id field", record_line);
    rows.push_back(std::move(row));
  }
  return assemble(std::move(rows), std::move(name));
}

Corpus ingest_jsonl(std::istream& in, std::string name) {
  std::vector<RawRow> rows;
  std::string text_line;
  std::size_t line = 0;
  bool any = false;
  while (std::getline(in, text_line)) {
    ++line;
    if (!text_line.empty() && text_line.back() == '\r') text_line.pop_back();
    if (text_line.find_first_not_of(" \t") == std::string::npos) continue;
    any = true;
    json obj;
    try {
      obj = json::parse(text_line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", line);
    if (!obj.contains("text")) throw ParseError("missing field 'text'", line);
    if (!obj.contains("label")) throw ParseError("missing field 'label'", line);
    if (!obj["text"].is_string()) throw ParseError("field 'text' must be a string", line);
    RawRow row;
    row.line = line;
    row.text = obj["text"].get<std::string>();
    if (row.text.empty()) throw ParseError("empty text field", line);
    const json& label = obj["label"];
    if (label.is_string())
      row.label = label.get<std::string>();
    else if (label.is_number_integer())
      row.label = std::to_string(label.get<long long>());
    else
      throw ParseError("unknown label type " + std::string(label.type_name()) + " (expected string or integer)",
                       line);
    if (row.label.empty()) throw ParseError("empty label field", line);
    if (obj.contains("id")) {
      const json& id = obj["id"];
      if (id.is_string()) row.id = id.get<std::string>();
      else if (id.is_number_integer()) row.id = std::to_string(id.get<long long>());
      else throw ParseError("field 'id' must be a string or integer", line);
    } else {
      row.id = std::to_string(rows.size());
    }
    rows.push_back(std::move(row));
  }
  if (!any) throw ParseError("empty file", 1);
  return assemble(std::move(rows), std::move(name));
}

Corpus ingest(const std::filesystem::path& path, CorpusFormat format, std::string name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string(), 0);
  if (name.empty()) name = path.stem().string();
  Corpus c = format == CorpusFormat::csv ? ingest_csv(in, std::move(name)) : ingest_jsonl(in, std::move(name));
  c.validate();
  return c;
}

std::filesystem::path metadata_path(const std::filesystem::path& corpus_path) {
  auto p = corpus_path;
  return p.replace_extension(".meta.json");
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  corpus.validate();
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& s : corpus.samples) {
      ordered_json row{{"id", s.id}, {"text", s.text}, {"label", s.label}};
      out << row.dump(-1, ' ', false, json::error_handler_t::strict) << '\n';
    }
  }
  ordered_json meta{{"name", corpus.name},
                    {"num_classes", corpus.num_classes},
                    {"num_samples", corpus.samples.size()},
                    {"label_names", corpus.label_names},
                    {"generation", corpus.generation ? synth_spec_to_json(*corpus.generation) : ordered_json(nullptr)}};
  std::ofstream out(metadata_path(path), std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + metadata_path(path).string());
  out << meta.dump(2) << '\n';
}

Corpus load_corpus(const std::filesystem::path& path) {
  Corpus c = ingest(path, CorpusFormat::jsonl);
  auto meta_file = metadata_path(path);
  if (!std::filesystem::exists(meta_file)) return c;
  std::ifstream in(meta_file);
  json meta;
  try {
    meta = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(meta_file.string() + ": " + e.what(), 0);
  }
  c.name = meta.value("name", c.name);
  if (meta.contains("label_names")) {
    auto names = meta["label_names"].get<std::vector<std::string>>();
    if (static_cast<int>(names.size()) != meta.value("num_classes", c.num_classes))
      throw ParseError(meta_file.string() + ": label_names does not match num_classes", 0);
    // Exported labels are already contiguous indices, so ingest's remapping
    // was the identity whenever every class is present.
    c.num_classes = static_cast<int>(names.size());
    c.label_names = std::move(names);
  }
  if (meta.contains("generation") && !meta["generation"].is_null()) c.generation = synth_spec_from_json(meta["generation"]);
  c.validate();
  return c;
}

}  // namespace gmint::text
