#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lenatten {

using Words = std::vector<std::string>;

struct Example {
  std::string id;
  Words source;
  Words reference;
  // Characters of the reference joined by single spaces.
  std::int64_t reference_char_length = 0;

  bool operator==(const Example&) const = default;
};

using Corpus = std::vector<Example>;

Words tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> words);
std::int64_t summary_char_length(std::span<const std::string> words);

// Tokenizes both sides and derives reference_char_length.
Example make_example(std::string id, std::string_view source, std::string_view summary);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kSos = 2;
  static constexpr int kEos = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // `words` excludes the reserved entries; ids start at kReserved.
  explicit Vocabulary(std::span<const std::string> words);

  std::size_t size() const noexcept { return words_.size(); }
  int id(std::string_view word) const;  // kUnk when absent
  bool contains(std::string_view word) const;
  const std::string& word(int id) const;
  const std::vector<std::string>& words() const noexcept { return words_; }
  // Non-reserved entries, in id order.
  std::vector<std::string> content_words() const;

  std::vector<int> encode(std::span<const std::string> words) const;
  Words decode(std::span<const int> ids) const;

  static bool is_special(int id) noexcept { return id >= 0 && id < kReserved; }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Most frequent `cap - 4` words over sources and references; ties broken
// lexicographically.
Vocabulary build_vocab(const Corpus& corpus, std::size_t cap);

Corpus parse_jsonl(std::istream& in, const std::string& origin = "<stream>");
Corpus load_jsonl(const std::filesystem::path& path);
void write_jsonl(std::ostream& out, const Corpus& corpus);
void save_jsonl(const Corpus& corpus, const std::filesystem::path& path);

enum class SyntheticTask { prefix_copy };

struct SyntheticSpec {
  std::size_t word_count = 48;  // drawn from the built-in list (max 56)
  std::size_t min_source_words = 10;
  std::size_t max_source_words = 20;
  std::int64_t min_target_chars = 10;
  std::int64_t max_target_chars = 60;
};

// Built-in word list used by the synthetic task; word lengths 2..8.
std::span<const std::string_view> synthetic_word_list();

// Each example: a random source, and as reference the longest source prefix
// whose character length fits a target drawn uniformly from
// [min_target_chars, max_target_chars].
Corpus generate_synthetic(SyntheticTask task, std::size_t n, std::uint64_t seed, const SyntheticSpec& spec = {});

struct Histogram {
  std::int64_t bin_width = 1;
  std::vector<std::int64_t> bin_starts;
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

Histogram length_histogram(const Corpus& corpus, std::int64_t bin_width);
void write_histogram_csv(std::ostream& out, const Histogram& h);
void write_histogram_svg(std::ostream& out, const Histogram& h, std::string_view title);

}  // namespace lenatten
