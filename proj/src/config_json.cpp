#include "ahl/config_json.hpp"

namespace ahl {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers}, {"num_heads", c.num_heads},   {"d_model", c.d_model},
              {"d_ff", c.d_ff},             {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"num_classes", c.num_classes}, {"activation", to_string(c.activation)}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.d_model = j.value("d_model", c.d_model);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.num_classes = j.value("num_classes", c.num_classes);
  if (j.contains("activation")) c.activation = activation_from_string(j.at("activation").get<std::string>());
  return c;
}

json to_json(const AttackConfig& c) {
  json j{{"alpha", c.alpha},
         {"l_max", c.l_max},
         {"h_max", c.h_max},
         {"ranking", to_string(c.ranking)},
         {"gradient_epsilon", c.gradient_epsilon},
         {"accumulate", c.accumulate},
         {"refresh_gradients", c.refresh_gradients},
         {"query_budget", nullptr},
         {"seed", c.seed}};
  if (c.query_budget) j["query_budget"] = *c.query_budget;
  return j;
}

AttackConfig attack_config_from_json(const json& j, AttackConfig c) {
  c.alpha = j.value("alpha", c.alpha);
  c.l_max = j.value("l_max", c.l_max);
  c.h_max = j.value("h_max", c.h_max);
  if (j.contains("ranking")) c.ranking = unit_ranking_from_string(j.at("ranking").get<std::string>());
  c.gradient_epsilon = j.value("gradient_epsilon", c.gradient_epsilon);
  c.accumulate = j.value("accumulate", c.accumulate);
  c.refresh_gradients = j.value("refresh_gradients", c.refresh_gradients);
  if (j.contains("query_budget")) {
    const auto& b = j.at("query_budget");
    if (b.is_null()) c.query_budget.reset();
    else c.query_budget = b.get<long>();
  }
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace ahl
