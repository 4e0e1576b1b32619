#include "qdc/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qdc/errors.hpp"

namespace qdc {

namespace {

nlohmann::json tensor_to_json(const ad::Tensor& t) {
  if (t.ndim() == 1) return t.value();
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < t.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < t.cols(); ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void tensor_from_json(const nlohmann::json& j, ad::Tensor& t,
                      const std::string& name) {
  if (t.ndim() == 1) {
    if (!j.is_array() || static_cast<long>(j.size()) != t.size())
      throw ConfigError("checkpoint: bad shape for \"" + name + "\"");
    for (int i = 0; i < t.size(); ++i) t.at(i) = j.at(static_cast<size_t>(i)).get<double>();
    return;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != t.rows())
    throw ConfigError("checkpoint: bad shape for \"" + name + "\"");
  for (int i = 0; i < t.rows(); ++i) {
    const auto& row = j.at(static_cast<size_t>(i));
    if (!row.is_array() || static_cast<int>(row.size()) != t.cols())
      throw ConfigError("checkpoint: bad shape for \"" + name + "\"");
    for (int c = 0; c < t.cols(); ++c) t.at(i, c) = row.at(static_cast<size_t>(c)).get<double>();
  }
}

nlohmann::json params_to_json(const ParamList& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : params) out[p.name] = tensor_to_json(p.tensor);
  return out;
}

void params_from_json(const nlohmann::json& j, ParamList params) {
  for (auto& p : params) {
    if (!j.contains(p.name))
      throw ConfigError("checkpoint: missing parameter \"" + p.name + "\"");
    tensor_from_json(j[p.name], p.tensor, p.name);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const PolicyModel& policy, const QEnsemble& ensemble,
                     const DatasetStats& stats) {
  nlohmann::json j;
  j["format"] = "qdc-ckpt-v1";
  j["config"] = nlohmann::json::parse(train_config_to_json_text(cfg));
  j["dims"] = {{"state_dim", policy.config().state_dim},
               {"action_dim", policy.config().action_dim},
               {"max_timestep", policy.config().max_timestep}};
  j["stats"] = {{"state_mean", stats.state_mean},
                {"state_std", stats.state_std},
                {"return_max", stats.return_max},
                {"return_min", stats.return_min}};
  j["params"] = params_to_json(policy.params());
  nlohmann::json q;
  q["q1"] = params_to_json(ensemble.q1().params("q1"));
  q["q2"] = params_to_json(ensemble.q2().params("q2"));
  j["q_params"] = std::move(q);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out << j.dump() << "\n";
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid checkpoint JSON: " + std::string(e.what()));
  }
  if (!j.contains("format") || j["format"] != "qdc-ckpt-v1")
    throw ConfigError("checkpoint: unsupported format");
  for (const char* key : {"config", "dims", "stats", "params", "q_params"}) {
    if (!j.contains(key))
      throw ConfigError("checkpoint: missing \"" + std::string(key) + "\"");
  }

  TrainConfig cfg = train_config_from_json_text(j["config"].dump());
  const int sd = j["dims"]["state_dim"].get<int>();
  const int ad = j["dims"]["action_dim"].get<int>();
  const int mt = j["dims"]["max_timestep"].get<int>();

  DatasetStats stats;
  stats.state_mean = j["stats"]["state_mean"].get<std::vector<double>>();
  stats.state_std = j["stats"]["state_std"].get<std::vector<double>>();
  stats.return_max = j["stats"]["return_max"].get<double>();
  stats.return_min = j["stats"]["return_min"].get<double>();

  PolicyConfig pcfg;
  pcfg.K = cfg.K;
  pcfg.d = cfg.d;
  pcfg.n_blocks = cfg.n_blocks;
  pcfg.conv_window = cfg.conv_window;
  pcfg.state_dim = sd;
  pcfg.action_dim = ad;
  pcfg.max_timestep = mt;
  pcfg.rtg_scale = cfg.rtg_scale;

  Rng rng(0);
  PolicyModel policy(pcfg, rng);
  params_from_json(j["params"], policy.params());

  QEnsemble ensemble(sd, ad, cfg.critic_hidden, policy, cfg.gamma,
                     cfg.polyak_tau, rng);
  params_from_json(j["q_params"]["q1"], ensemble.q1().params("q1"));
  params_from_json(j["q_params"]["q2"], ensemble.q2().params("q2"));
  ensemble.polyak_update(policy, 1.0);

  return Checkpoint{std::move(cfg), sd, ad, mt, std::move(stats),
                    std::move(policy), std::move(ensemble)};
}

}  // namespace qdc
