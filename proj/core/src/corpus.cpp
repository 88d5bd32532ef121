#include "lenatten/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lenatten/error.hpp"
#include "lenatten/length_control.hpp"
#include "lenatten/rng.hpp"

namespace lenatten {

using nlohmann::json;

Words tokenize(std::string_view text) {
  Words out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string detokenize(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::int64_t summary_char_length(std::span<const std::string> words) {
  if (words.empty()) return 0;
  std::int64_t n = static_cast<std::int64_t>(words.size()) - 1;
  for (const auto& w : words) n += static_cast<std::int64_t>(char_length(w));
  return n;
}

Example make_example(std::string id, std::string_view source, std::string_view summary) {
  Example ex;
  ex.id = std::move(id);
  ex.source = tokenize(source);
  ex.reference = tokenize(summary);
  if (ex.source.empty()) throw ValidationError("example " + ex.id + " has an empty source");
  if (ex.reference.empty()) throw ValidationError("example " + ex.id + " has an empty summary");
  ex.reference_char_length = summary_char_length(ex.reference);
  return ex;
}

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::span<const std::string>{}) {}

Vocabulary::Vocabulary(std::span<const std::string> words) {
  words_ = {"<pad>", "<unk>", "<s>", "</s>"};
  for (int i = 0; i < kReserved; ++i) index_.emplace(words_[static_cast<std::size_t>(i)], i);
  for (const auto& w : words) {
    if (index_.count(w)) throw ValidationError("duplicate vocabulary entry '" + w + "'");
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " outside [0, " + std::to_string(words_.size()) + ")");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocabulary::content_words() const {
  return {words_.begin() + kReserved, words_.end()};
}

std::vector<int> Vocabulary::encode(std::span<const std::string> words) const {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

Words Vocabulary::decode(std::span<const int> ids) const {
  Words out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(word(i));
  return out;
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t cap) {
  if (cap < 5) throw ConfigError("vocabulary cap must be >= 5, got " + std::to_string(cap));
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& ex : corpus) {
    for (const auto& w : ex.source) ++freq[w];
    for (const auto& w : ex.reference) ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words;
  for (const auto& [w, n] : ranked) {
    if (words.size() + Vocabulary::kReserved >= cap) break;
    if (w == "<pad>" || w == "<unk>" || w == "<s>" || w == "</s>") continue;
    words.push_back(w);
  }
  return Vocabulary(words);
}

// ---------------------------------------------------------------- JSONL

Corpus parse_jsonl(std::istream& in, const std::string& origin) {
  Corpus corpus;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    for (const char* field : {"id", "source", "summary"}) {
      if (!j.contains(field)) throw ParseError(where + ": missing field \"" + field + "\"");
      if (!j[field].is_string()) throw ParseError(where + ": field \"" + field + "\" must be a string");
    }
    auto id = j["id"].get<std::string>();
    if (!seen.insert(id).second) throw ValidationError(where + ": duplicate id \"" + id + "\"");
    try {
      corpus.push_back(make_example(std::move(id), j["source"].get<std::string>(), j["summary"].get<std::string>()));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
  return corpus;
}

Corpus load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open corpus " + path.string());
  return parse_jsonl(in, path.string());
}

void write_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& ex : corpus) {
    json j;
    j["id"] = ex.id;
    j["source"] = detokenize(ex.source);
    j["summary"] = detokenize(ex.reference);
    out << j.dump() << '\n';
  }
}

void save_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write corpus " + path.string());
  write_jsonl(out, corpus);
}

// ---------------------------------------------------------------- synthetic

namespace {

constexpr std::array<std::string_view, 56> kWordList = {
    "an", "by", "go", "of", "up", "we", "so", "it",                      // 2
    "art", "box", "cat", "dog", "fox", "map", "sun", "zip",              // 3
    "bird", "cold", "fish", "gold", "jump", "lake", "moon", "wind",      // 4
    "apple", "brick", "cloud", "dream", "grape", "plant", "river", "stone",  // 5
    "bridge", "candle", "forest", "garden", "hammer", "pencil", "rocket", "silver",  // 6
    "balloon", "cabinet", "dolphin", "captain", "harvest", "lantern", "mineral", "pyramid",
    "elephant", "horizons", "keyboard", "mountain", "notebook", "operator", "painting", "umbrella",
};

}  // namespace

std::span<const std::string_view> synthetic_word_list() { return kWordList; }

Corpus generate_synthetic(SyntheticTask task, std::size_t n, std::uint64_t seed, const SyntheticSpec& spec) {
  if (task != SyntheticTask::prefix_copy) throw ConfigError("unknown synthetic task");
  if (n < 1) throw ConfigError("synthetic corpus size must be >= 1");
  if (spec.word_count < 1 || spec.word_count > kWordList.size()) {
    throw ConfigError("synthetic word_count must be in [1, " + std::to_string(kWordList.size()) + "]");
  }
  if (spec.min_source_words < 1 || spec.max_source_words < spec.min_source_words) {
    throw ConfigError("invalid synthetic source length range");
  }
  if (spec.min_target_chars < 8 || spec.max_target_chars < spec.min_target_chars) {
    throw ConfigError("synthetic target range must start at >= 8 characters (longest word)");
  }
  // Spread the chosen subset across all word lengths.
  std::vector<std::string> words;
  for (std::size_t i = 0; i < spec.word_count; ++i) {
    const std::size_t group = i % 7, member = i / 7;
    words.emplace_back(kWordList[group * 8 + member]);
  }

  Rng rng = Rng::derive(seed, "synthetic.prefix_copy");
  Corpus corpus;
  corpus.reserve(n);
  const int width = static_cast<int>(std::to_string(n - 1).size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto len = static_cast<std::size_t>(
        rng.between(static_cast<std::int64_t>(spec.min_source_words), static_cast<std::int64_t>(spec.max_source_words)));
    Example ex;
    std::ostringstream id;
    id << "syn-" << std::string(static_cast<std::size_t>(width) - std::to_string(k).size(), '0') << k;
    ex.id = id.str();
    for (std::size_t i = 0; i < len; ++i) ex.source.push_back(words[rng.below(words.size())]);
    const auto target = rng.between(spec.min_target_chars, spec.max_target_chars);
    std::int64_t used = 0;
    for (const auto& w : ex.source) {
      const auto cost = token_cost(w, true, ex.reference.empty());
      if (used + cost > target) break;
      used += cost;
      ex.reference.push_back(w);
    }
    ex.reference_char_length = used;
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

// ---------------------------------------------------------------- histogram

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

Histogram length_histogram(const Corpus& corpus, std::int64_t bin_width) {
  if (bin_width < 1) throw ConfigError("histogram bin width must be >= 1");
  if (corpus.empty()) throw InputError("histogram of an empty corpus");
  std::int64_t lo = corpus.front().reference_char_length, hi = lo;
  for (const auto& ex : corpus) {
    lo = std::min(lo, ex.reference_char_length);
    hi = std::max(hi, ex.reference_char_length);
  }
  Histogram h;
  h.bin_width = bin_width;
  const std::int64_t first = (lo / bin_width) * bin_width;
  const std::int64_t bins = hi / bin_width - lo / bin_width + 1;
  for (std::int64_t b = 0; b < bins; ++b) h.bin_starts.push_back(first + b * bin_width);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (const auto& ex : corpus) ++h.counts[static_cast<std::size_t>((ex.reference_char_length - first) / bin_width)];
  return h;
}

void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "bin_start,bin_end,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    out << h.bin_starts[i] << ',' << h.bin_starts[i] + h.bin_width << ',' << h.counts[i] << '\n';
  }
}

void write_histogram_svg(std::ostream& out, const Histogram& h, std::string_view title) {
  constexpr int kWidth = 640, kHeight = 320, kMargin = 40;
  const std::size_t peak = h.counts.empty() ? 1 : std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  const double bar = h.counts.empty() ? 0.0 : static_cast<double>(kWidth - 2 * kMargin) / static_cast<double>(h.counts.size());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  out << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">";
  for (char c : title) {
    if (c == '<') out << "&lt;";
    else if (c == '>') out << "&gt;";
    else if (c == '&') out << "&amp;";
    else out << c;
  }
  out << "</text>\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double height = static_cast<double>(kHeight - 2 * kMargin) * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    out << "<rect x=\"" << kMargin + bar * static_cast<double>(i) << "\" y=\"" << kHeight - kMargin - height
        << "\" width=\"" << bar * 0.9 << "\" height=\"" << height << "\" fill=\"#4a7ab5\"><title>["
        << h.bin_starts[i] << "," << h.bin_starts[i] + h.bin_width << "): " << h.counts[i] << "</title></rect>\n";
  }
  if (!h.bin_starts.empty()) {
    out << "<text x=\"" << kMargin << "\" y=\"" << kHeight - 15 << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << h.bin_starts.front() << "</text>\n";
    out << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - 15
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << h.bin_starts.back() + h.bin_width
        << " chars</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace lenatten
