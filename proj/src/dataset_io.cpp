#include <fstream>
#include <sstream>

#include "ahl/errors.hpp"
#include "ahl/tasks.hpp"

namespace ahl {

using nlohmann::json;

std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += json{{"tokens", ex.tokens}, {"label", ex.label}, {"meta", ex.meta}}.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> from_jsonl(const std::string& text) {
  std::vector<Example> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Example ex;
      ex.tokens = j.at("tokens").get<std::vector<int>>();
      ex.label = j.at("label").get<int>();
      if (j.contains("meta")) ex.meta = j.at("meta");
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

void save_jsonl(const std::vector<Example>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string text = to_jsonl(examples);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<Example> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_jsonl(ss.str());
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "task.json", std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / "task.json").string());
    out << to_json(ds.spec).dump(2) << '\n';
  }
  Vocab::for_task(ds.spec).save(dir / "vocab.txt");
  save_jsonl(ds.train, dir / "train.jsonl");
  save_jsonl(ds.dev, dir / "dev.jsonl");
  save_jsonl(ds.test, dir / "test.jsonl");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "task.json");
  if (!in) throw std::runtime_error("cannot read " + (dir / "task.json").string());
  Dataset ds;
  try {
    ds.spec = task_spec_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ParseError(1, e.what());
  }
  ds.train = load_jsonl(dir / "train.jsonl");
  ds.dev = load_jsonl(dir / "dev.jsonl");
  ds.test = load_jsonl(dir / "test.jsonl");
  return ds;
}

}  // namespace ahl
