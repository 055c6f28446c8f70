#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ahl {

inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kUnkId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kFirstContentId = 4;

enum class TaskKind { keyword_sentiment, pair_match };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::pair_match;
  int seq_len = 32;  // tokens per example including CLS
  int vocab_size = 200;
  int n_train = 10000;
  int n_dev = 1000;
  int n_test = 1000;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

nlohmann::json to_json(const TaskSpec& s);
TaskSpec task_spec_from_json(const nlohmann::json& j);

// Dense token table; ids 0..3 are PAD, CLS, UNK, SEP.
class Vocab {
 public:
  static Vocab for_task(const TaskSpec& spec);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int id(const std::string& token) const;  // kUnkId when unknown
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
};

// Keyword-sentiment marker ranges (ids), derived from the vocabulary size.
struct KeywordLayout {
  int pos_begin, pos_end;  // [begin, end)
  int neg_begin, neg_end;
  int filler_begin, filler_end;
};
KeywordLayout keyword_layout(int vocab_size);

struct Example {
  std::vector<int> tokens;  // CLS-prefixed
  int label = 0;
  nlohmann::json meta = nlohmann::json::object();
  bool operator==(const Example&) const = default;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

// Label = majority polarity of an odd number of markers; the majority leads
// by at least three, so marker counts alone decide the label.
Dataset gen_keyword_sentiment(const TaskSpec& spec);

// [CLS, t, distractors..., SEP, tail...]; label 1 iff t occurs in the tail.
Dataset gen_pair_match(const TaskSpec& spec);

Dataset generate(const TaskSpec& spec);

std::string to_jsonl(const std::vector<Example>& examples);
std::vector<Example> from_jsonl(const std::string& text);
void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path);
std::vector<Example> load_jsonl(const std::filesystem::path& path);

// Directory layout: task.json, vocab.txt, train.jsonl, dev.jsonl, test.jsonl.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace ahl
