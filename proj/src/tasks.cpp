#include "ahl/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "ahl/errors.hpp"
#include "ahl/model.hpp"

namespace ahl {

static_assert(kPadId == kPadToken, "vocabulary and model must agree on the padding id");

std::string to_string(TaskKind k) { return k == TaskKind::keyword_sentiment ? "keyword_sentiment" : "pair_match"; }

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "keyword_sentiment" || s == "keyword") return TaskKind::keyword_sentiment;
  if (s == "pair_match" || s == "pair") return TaskKind::pair_match;
  throw ContractError("unknown task '" + s + "'");
}

void TaskSpec::validate() const {
  if (n_train <= 0 || n_dev <= 0 || n_test <= 0) throw ContractError("task spec: split sizes must be positive");
  if (kind == TaskKind::keyword_sentiment) {
    if (seq_len < 8) throw ContractError("task spec: keyword_sentiment needs seq_len >= 8");
    if (vocab_size < 8) throw ContractError("task spec: keyword_sentiment needs vocab_size >= 8");
  } else {
    if (seq_len < 4) throw ContractError("task spec: pair_match needs seq_len >= 4");
    if (vocab_size < 7) throw ContractError("task spec: pair_match needs vocab_size >= 7");
  }
}

nlohmann::json to_json(const TaskSpec& s) {
  return {{"kind", to_string(s.kind)}, {"seq_len", s.seq_len}, {"vocab_size", s.vocab_size}, {"n_train", s.n_train},
          {"n_dev", s.n_dev},          {"n_test", s.n_test},   {"seed", s.seed}};
}

TaskSpec task_spec_from_json(const nlohmann::json& j) {
  TaskSpec s;
  if (j.contains("kind")) s.kind = task_kind_from_string(j.at("kind").get<std::string>());
  s.seq_len = j.value("seq_len", s.seq_len);
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.n_train = j.value("n_train", s.n_train);
  s.n_dev = j.value("n_dev", s.n_dev);
  s.n_test = j.value("n_test", s.n_test);
  s.seed = j.value("seed", s.seed);
  return s;
}

KeywordLayout keyword_layout(int vocab_size) {
  const int content = vocab_size - kFirstContentId;
  const int markers = std::clamp(content / 24, 1, 16);
  KeywordLayout l;
  l.pos_begin = kFirstContentId;
  l.pos_end = l.pos_begin + markers;
  l.neg_begin = l.pos_end;
  l.neg_end = l.neg_begin + markers;
  l.filler_begin = l.neg_end;
  l.filler_end = vocab_size;
  return l;
}

Vocab Vocab::for_task(const TaskSpec& spec) {
  Vocab v;
  v.tokens_ = {"[PAD]", "[CLS]", "[UNK]", "[SEP]"};
  if (spec.kind == TaskKind::keyword_sentiment) {
    const auto l = keyword_layout(spec.vocab_size);
    for (int i = l.pos_begin; i < l.pos_end; ++i) v.tokens_.push_back("pos" + std::to_string(i - l.pos_begin));
    for (int i = l.neg_begin; i < l.neg_end; ++i) v.tokens_.push_back("neg" + std::to_string(i - l.neg_begin));
    for (int i = l.filler_begin; i < l.filler_end; ++i) v.tokens_.push_back("w" + std::to_string(i - l.filler_begin));
  } else {
    for (int i = kFirstContentId; i < spec.vocab_size; ++i) v.tokens_.push_back("t" + std::to_string(i - kFirstContentId));
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), token);
  return it == tokens_.end() ? kUnkId : static_cast<int>(it - tokens_.begin());
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Vocab v;
  std::string line;
  while (std::getline(in, line)) v.tokens_.push_back(line);
  return v;
}

namespace {

// Uniform integer in [lo, hi) from an explicit draw; stable across standard libraries.
int uniform(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo));
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
}

// Exactly balanced labels in random order.
std::vector<int> balanced_labels(int n, std::mt19937_64& rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[i] = i % 2;
  shuffle(labels, rng);
  return labels;
}

Example keyword_example(const TaskSpec& spec, const KeywordLayout& l, int label, std::mt19937_64& rng, int index) {
  static constexpr int kCounts[] = {3, 5, 7};
  const int k = kCounts[uniform(rng, 0, 3)];
  const int minority = uniform(rng, 0, (k - 3) / 2 + 1);
  const int majority = k - minority;
  const int n_pos = label == 1 ? majority : minority;
  const int n_neg = k - n_pos;

  Example ex;
  ex.label = label;
  ex.tokens.assign(static_cast<std::size_t>(spec.seq_len), 0);
  ex.tokens[0] = kClsId;
  for (int i = 1; i < spec.seq_len; ++i) ex.tokens[i] = uniform(rng, l.filler_begin, l.filler_end);
  std::vector<int> positions(static_cast<std::size_t>(spec.seq_len - 1));
  std::iota(positions.begin(), positions.end(), 1);
  shuffle(positions, rng);
  for (int m = 0; m < k; ++m) {
    ex.tokens[positions[m]] = m < n_pos ? uniform(rng, l.pos_begin, l.pos_end) : uniform(rng, l.neg_begin, l.neg_end);
  }
  ex.meta = {{"kind", "keyword_sentiment"}, {"index", index}, {"n_pos", n_pos}, {"n_neg", n_neg}};
  return ex;
}

Example pair_example(const TaskSpec& spec, int label, std::mt19937_64& rng, int index) {
  const int distractors = (spec.seq_len - 3) / 2;
  const int tail = spec.seq_len - 3 - distractors;
  const int t = uniform(rng, kFirstContentId, spec.vocab_size);
  // Any content id except t.
  auto other = [&] {
    int v = uniform(rng, kFirstContentId, spec.vocab_size - 1);
    return v >= t ? v + 1 : v;
  };
  Example ex;
  ex.label = label;
  ex.tokens.reserve(static_cast<std::size_t>(spec.seq_len));
  ex.tokens.push_back(kClsId);
  ex.tokens.push_back(t);
  for (int i = 0; i < distractors; ++i) ex.tokens.push_back(other());
  ex.tokens.push_back(kSepId);
  const int tail_start = static_cast<int>(ex.tokens.size());
  for (int i = 0; i < tail; ++i) ex.tokens.push_back(other());
  int match = -1;
  if (label == 1) {
    match = tail_start + uniform(rng, 0, tail);
    ex.tokens[match] = t;
  }
  ex.meta = {{"kind", "pair_match"}, {"index", index}, {"query_token", t}, {"match_position", match}};
  return ex;
}

template <typename MakeExample>
Dataset generate_splits(const TaskSpec& spec, MakeExample make) {
  std::mt19937_64 rng(spec.seed);
  Dataset ds;
  ds.spec = spec;
  int index = 0;
  const std::pair<int, std::vector<Example>*> splits[] = {
      {spec.n_train, &ds.train}, {spec.n_dev, &ds.dev}, {spec.n_test, &ds.test}};
  for (auto [n, out] : splits) {
    const auto labels = balanced_labels(n, rng);
    out->reserve(static_cast<std::size_t>(n));
    for (int label : labels) out->push_back(make(label, rng, index++));
  }
  return ds;
}

}  // namespace

Dataset gen_keyword_sentiment(const TaskSpec& spec) {
  if (spec.kind != TaskKind::keyword_sentiment) throw ContractError("gen_keyword_sentiment: wrong task kind");
  spec.validate();
  const auto layout = keyword_layout(spec.vocab_size);
  return generate_splits(spec, [&](int label, std::mt19937_64& rng, int index) {
    return keyword_example(spec, layout, label, rng, index);
  });
}

Dataset gen_pair_match(const TaskSpec& spec) {
  if (spec.kind != TaskKind::pair_match) throw ContractError("gen_pair_match: wrong task kind");
  spec.validate();
  return generate_splits(spec, [&](int label, std::mt19937_64& rng, int index) {
    return pair_example(spec, label, rng, index);
  });
}

Dataset generate(const TaskSpec& spec) {
  return spec.kind == TaskKind::keyword_sentiment ? gen_keyword_sentiment(spec) : gen_pair_match(spec);
}

}  // namespace ahl
