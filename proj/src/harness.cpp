#include "ppocma/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "detail/csv.hpp"
#include "detail/io.hpp"

namespace ppocma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStatsHeader =
    "iteration,env_steps,mean_return,mean_sigma,max_sigma,mean_mu_norm,"
    "frac_positive_adv,critic_loss,policy_loss,k_min,k_max";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::string trim_number(double v) {
  // compact numeric tag for setting labels (0.2 -> "0.2", 8000 -> "8000")
  std::string s = detail::format_double(v);
  return s;
}

json algo_to_json(const AlgoConfig& a) {
  return json{{"mode", to_string(a.mode)}, {"N", a.N},
              {"T", a.T},                  {"gamma", a.gamma},
              {"lambda", a.lambda},        {"K", a.K},
              {"M", a.M},                  {"H", a.H},
              {"epsilon", a.epsilon},      {"w_entropy", a.w_entropy},
              {"learning_rate", a.learning_rate}};
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
  return seed ^ (0x9E3779B97F4A7C15ull * (tag + 1));
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig cfg;
  static const std::vector<std::string> known = {
      "env",        "mode",          "N",
      "T",          "gamma",         "lambda",
      "K",          "M",             "H",
      "epsilon",    "w_entropy",     "learning_rate",
      "action_repeat", "total_steps", "seeds",
      "output_dir", "log_every",     "pretrain_steps",
      "pretrain_batch", "setting",   "sweep",
      "sweep_envs"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
  }

  if (j.contains("env")) cfg.env = j.at("env").get<std::string>();
  if (j.contains("mode")) cfg.algo.mode = algo_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("N")) cfg.algo.N = j.at("N").get<int>();
  if (j.contains("T")) cfg.algo.T = j.at("T").get<int>();
  if (j.contains("gamma")) cfg.algo.gamma = j.at("gamma").get<double>();
  if (j.contains("lambda")) cfg.algo.lambda = j.at("lambda").get<double>();
  if (j.contains("K")) cfg.algo.K = j.at("K").get<int>();
  if (j.contains("M")) cfg.algo.M = j.at("M").get<int>();
  if (j.contains("H")) cfg.algo.H = j.at("H").get<int>();
  if (j.contains("epsilon")) cfg.algo.epsilon = j.at("epsilon").get<double>();
  if (j.contains("w_entropy")) cfg.algo.w_entropy = j.at("w_entropy").get<double>();
  if (j.contains("learning_rate")) cfg.algo.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("action_repeat")) cfg.action_repeat = j.at("action_repeat").get<int>();
  if (j.contains("total_steps")) cfg.total_steps = j.at("total_steps").get<long long>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("log_every")) cfg.log_every = j.at("log_every").get<int>();
  if (j.contains("pretrain_steps")) cfg.pretrain_steps = j.at("pretrain_steps").get<int>();
  if (j.contains("pretrain_batch")) cfg.pretrain_batch = j.at("pretrain_batch").get<int>();
  if (j.contains("setting")) cfg.setting = j.at("setting").get<std::string>();
  if (j.contains("sweep"))
    for (const auto& [axis, values] : j.at("sweep").items())
      cfg.sweep_axes[axis] = values.get<std::vector<double>>();
  if (j.contains("sweep_envs"))
    cfg.sweep_envs = j.at("sweep_envs").get<std::vector<std::string>>();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  return from_json_text(detail::read_file(path));
}

std::string ExperimentConfig::to_json_text() const {
  json j = algo_to_json(algo);
  j["env"] = env;
  j["action_repeat"] = action_repeat;
  j["total_steps"] = total_steps;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  j["log_every"] = log_every;
  j["pretrain_steps"] = pretrain_steps;
  j["pretrain_batch"] = pretrain_batch;
  j["setting"] = setting;
  if (!sweep_axes.empty()) {
    json s;
    for (const auto& [axis, values] : sweep_axes) s[axis] = values;
    j["sweep"] = s;
  }
  if (!sweep_envs.empty()) j["sweep_envs"] = sweep_envs;
  return j.dump(2) + "\n";
}

std::string ExperimentConfig::setting_label() const {
  if (!setting.empty()) return setting;
  std::string label = to_string(algo.mode) + "_N" + std::to_string(algo.N) + "_M" +
                      std::to_string(algo.M);
  switch (algo.mode) {
    case AlgoMode::ppo_cma:
    case AlgoMode::ppo_cma_no_mirror:
      label += "_H" + std::to_string(algo.H);
      break;
    case AlgoMode::ppo_clip:
      label += "_e" + trim_number(algo.epsilon) + "_w" + trim_number(algo.w_entropy);
      break;
    default:
      break;
  }
  return label;
}

std::string ExperimentConfig::config_hash() const {
  json j = algo_to_json(algo);
  j["env"] = env;
  j["action_repeat"] = action_repeat;
  j["total_steps"] = total_steps;
  j["log_every"] = log_every;
  j["pretrain_steps"] = pretrain_steps;
  j["pretrain_batch"] = pretrain_batch;
  return hex64(fnv1a(j.dump()));
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw std::invalid_argument("config: seeds must be non-empty");
  if (total_steps < algo.N)
    throw std::invalid_argument("config: total_steps must be >= N");
  if (action_repeat < 1) throw std::invalid_argument("config: action_repeat must be >= 1");
  if (log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
  if (pretrain_steps < 0 || pretrain_batch < 1)
    throw std::invalid_argument("config: bad pretraining parameters");
  const auto probe = make_env(env, action_repeat);  // validates the env name
  algo.validate(probe->episode_cap(), &std::cerr);
}

std::vector<Episode> collect_episodes(Env& env, const GaussianPolicy& policy,
                                      const ObsNormalizer* normalizer, int min_steps,
                                      int episode_cap, RandomStream& env_rng,
                                      RandomStream& action_rng,
                                      Eigen::MatrixXd* raw_obs_out) {
  const int act_dim = policy.action_dim();
  const bool scale = normalizer && normalizer->initialized();
  std::vector<Eigen::VectorXd> raw_obs;
  std::vector<Episode> episodes;
  int steps = 0;

  while (steps < min_steps) {
    Eigen::VectorXd obs_raw = env.reset(env_rng);
    raw_obs.push_back(obs_raw);
    Eigen::VectorXd obs = scale ? normalizer->apply(obs_raw) : obs_raw;

    Episode ep;
    std::vector<Eigen::VectorXd> mus, vars;
    std::vector<double> logps;
    for (int t = 0; t < episode_cap; ++t) {
      Eigen::MatrixXd mu, var;
      policy.mean_and_var(obs, mu, var);
      Eigen::VectorXd a(act_dim);
      double logp = 0.0;
      for (int jdim = 0; jdim < act_dim; ++jdim) {
        const double z = action_rng.normal();
        a[jdim] = mu(jdim, 0) + std::sqrt(var(jdim, 0)) * z;
        logp += -0.5 * (z * z + std::log(var(jdim, 0)) + 1.8378770664093454836);
      }

      const Env::Step out = env.step(a);
      raw_obs.push_back(out.obs);
      Eigen::VectorXd obs_next = scale ? normalizer->apply(out.obs) : out.obs;

      ExperienceTuple tup;
      tup.s = obs;
      tup.a = a;
      tup.r = out.reward;
      tup.s_next = obs_next;
      tup.t = t;
      tup.end = out.end;
      const bool cap_hit = (t == episode_cap - 1);
      if (tup.end == EndKind::none && cap_hit) tup.end = EndKind::timeout;
      ep.traj.push_back(std::move(tup));
      mus.push_back(mu.col(0));
      vars.push_back(var.col(0));
      logps.push_back(logp);

      obs = std::move(obs_next);
      if (ep.traj.back().end != EndKind::none) break;
    }

    const int len = static_cast<int>(ep.traj.size());
    ep.gen_mean.resize(act_dim, len);
    ep.gen_var.resize(act_dim, len);
    ep.old_logp.resize(len);
    for (int i = 0; i < len; ++i) {
      ep.gen_mean.col(i) = mus[i];
      ep.gen_var.col(i) = vars[i];
      ep.old_logp[i] = logps[i];
    }
    steps += len;
    episodes.push_back(std::move(ep));
  }

  if (raw_obs_out) {
    raw_obs_out->resize(raw_obs.front().size(), static_cast<Eigen::Index>(raw_obs.size()));
    for (std::size_t i = 0; i < raw_obs.size(); ++i)
      raw_obs_out->col(static_cast<Eigen::Index>(i)) = raw_obs[i];
  }
  return episodes;
}

namespace {

std::string stats_row(const IterationStats& s) {
  std::string row = std::to_string(s.iteration);
  row += ',' + std::to_string(s.env_steps);
  for (double v : {s.mean_return, s.mean_sigma, s.max_sigma, s.mean_mu_norm,
                   s.frac_positive_adv, s.critic_loss, s.policy_loss, s.k_min, s.k_max})
    row += ',' + detail::format_double(v);
  return row;
}

}  // namespace

RunArtifacts run_single(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  auto env = make_env(config.env, config.action_repeat);
  const int episode_cap = config.algo.T > 0
                              ? std::min(config.algo.T, env->episode_cap())
                              : env->episode_cap();

  const PolicyArch arch = config.algo.uses_combined_net() ? PolicyArch::combined_net
                                                          : PolicyArch::separate_nets;
  GaussianPolicy policy(env->obs_dim(), env->bounds(), {128, 128}, arch,
                        sub_seed(seed, 1));
  Critic critic(env->obs_dim(), {128, 128}, sub_seed(seed, 2));

  RandomStream pretrain_rng = RandomStream::derive(seed, 3);
  pretrain(policy, pretrain_rng,
           {config.pretrain_steps, config.pretrain_batch, config.algo.learning_rate});

  ObsNormalizer normalizer(env->obs_dim());
  HistoryBuffer history(config.algo.effective_history());
  TrainState train(policy, critic, config.algo.learning_rate);
  RandomStream env_rng = RandomStream::derive(seed, 4);
  RandomStream action_rng = RandomStream::derive(seed, 5);
  RandomStream train_rng = RandomStream::derive(seed, 6);

  const bool didactic = config.env == "quadratic";
  const Eigen::VectorXd probe_state = Eigen::VectorXd::Zero(env->obs_dim());

  std::string stats_csv = std::string(kStatsHeader) + "\n";
  std::string actions_csv = "iteration,sample,a0,a1\n";
  std::string policy_csv = "iteration,mu0,mu1,sigma0,sigma1\n";
  std::vector<MinibatchTracePoint> pg_trace;

  long long steps_done = 0, iteration = 0;
  double final_mean_return = 0.0;
  while (steps_done < config.total_steps) {
    iteration += 1;
    Eigen::MatrixXd raw_obs;
    std::vector<Episode> episodes =
        collect_episodes(*env, policy, &normalizer, config.algo.N, episode_cap, env_rng,
                         action_rng, &raw_obs);
    normalizer.update(raw_obs);

    const bool logged = (iteration - 1) % config.log_every == 0;
    if (didactic && logged) {
      Eigen::MatrixXd mu, var;
      policy.mean_and_var(probe_state, mu, var);
      policy_csv += std::to_string(iteration) + ',' + detail::format_double(mu(0, 0)) +
                    ',' + detail::format_double(mu(1, 0)) + ',' +
                    detail::format_double(std::sqrt(var(0, 0))) + ',' +
                    detail::format_double(std::sqrt(var(1, 0))) + '\n';
      long long sample = 0;
      for (const auto& ep : episodes)
        for (const auto& tup : ep.traj) {
          actions_csv += std::to_string(iteration) + ',' + std::to_string(sample++) +
                         ',' + detail::format_double(tup.a[0]) + ',' +
                         detail::format_double(tup.a[1]) + '\n';
        }
    }

    const bool record_trace =
        config.algo.mode == AlgoMode::vanilla_pg && iteration == 1;
    IterationStats stats =
        run_iteration(policy, critic, history, episodes, config.algo, episode_cap, train,
                      train_rng, record_trace ? &pg_trace : nullptr, &probe_state);

    for (const auto& ep : episodes) steps_done += static_cast<long long>(ep.traj.size());
    stats.iteration = iteration;
    stats.env_steps = steps_done;
    stats.k_min = normalizer.scale().minCoeff();
    stats.k_max = normalizer.scale().maxCoeff();
    stats_csv += stats_row(stats) + '\n';
    final_mean_return = stats.mean_return;
  }

  const fs::path run_dir =
      fs::path(config.output_dir) / config.setting_label() / ("seed" + std::to_string(seed));
  fs::create_directories(run_dir);
  detail::atomic_write((run_dir / "stats.csv").string(), stats_csv);
  save_policy(policy, (run_dir / "policy.ckpt").string());
  save_critic(critic, (run_dir / "critic.ckpt").string());
  if (didactic) {
    detail::atomic_write((run_dir / "actions.csv").string(), actions_csv);
    detail::atomic_write((run_dir / "policy_by_iteration.csv").string(), policy_csv);
  }
  if (!pg_trace.empty()) {
    std::string trace_csv = "step,mu0,mu1,sigma0,sigma1,mu_norm,loss\n";
    for (const auto& pt : pg_trace) {
      trace_csv += std::to_string(pt.step);
      for (double v : {pt.mu[0], pt.mu[1], pt.sigma[0], pt.sigma[1], pt.mu_norm, pt.loss})
        trace_csv += ',' + detail::format_double(v);
      trace_csv += '\n';
    }
    detail::atomic_write((run_dir / "minibatch_trace.csv").string(), trace_csv);
  }

  json summary{{"env", config.env},
               {"mode", to_string(config.algo.mode)},
               {"setting", config.setting_label()},
               {"config_hash", config.config_hash()},
               {"seed", seed},
               {"iterations", iteration},
               {"env_steps", steps_done},
               {"final_mean_return", final_mean_return}};
  detail::atomic_write((run_dir / "summary.json").string(), summary.dump(2) + "\n");

  return {run_dir, seed, iteration, steps_done, final_mean_return};
}

std::vector<RunArtifacts> run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::vector<RunArtifacts> out;
  out.reserve(config.seeds.size());
  for (std::uint64_t seed : config.seeds) out.push_back(run_single(config, seed));
  return out;
}

std::string ScoreTable::to_csv() const {
  std::string csv = "setting,score\n";
  for (const auto& [setting, score] : setting_scores)
    csv += setting + ',' + detail::format_double(score) + '\n';
  if (!degenerate_tasks.empty()) {
    csv += "# degenerate tasks (all R equal, scores pinned to 0.5):";
    for (const auto& t : degenerate_tasks) csv += ' ' + t;
    csv += '\n';
  }
  return csv;
}

double ScoreTable::score_of(const std::string& setting) const {
  for (const auto& [name, score] : setting_scores)
    if (name == setting) return score;
  throw std::out_of_range("no such setting: " + setting);
}

ScoreTable normalize_scores(const std::vector<RunScore>& runs) {
  if (runs.empty()) throw std::invalid_argument("normalize_scores: no runs");

  std::map<std::string, std::pair<double, double>> task_range;
  for (const auto& r : runs) {
    auto [it, fresh] = task_range.emplace(r.task, std::make_pair(r.final_return, r.final_return));
    if (!fresh) {
      it->second.first = std::min(it->second.first, r.final_return);
      it->second.second = std::max(it->second.second, r.final_return);
    }
  }

  ScoreTable table;
  for (const auto& [task, range] : task_range)
    if (range.first == range.second) table.degenerate_tasks.push_back(task);

  std::map<std::string, std::pair<double, long long>> per_setting;  // sum, count
  for (const auto& r : runs) {
    const auto& range = task_range.at(r.task);
    const double norm = range.first == range.second
                            ? 0.5
                            : (r.final_return - range.first) / (range.second - range.first);
    auto& acc = per_setting[r.setting];
    acc.first += norm;
    acc.second += 1;
  }

  double best = 0.0;
  for (const auto& [setting, acc] : per_setting)
    best = std::max(best, acc.first / double(acc.second));
  for (const auto& [setting, acc] : per_setting) {
    const double mean = acc.first / double(acc.second);
    table.setting_scores.emplace_back(setting, best > 0.0 ? mean / best : mean);
  }
  std::sort(table.setting_scores.begin(), table.setting_scores.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second > b.second : a.first < b.first;
            });
  return table;
}

namespace {

void apply_axis(ExperimentConfig& cfg, const std::string& axis, double value) {
  if (axis == "N") cfg.algo.N = static_cast<int>(value);
  else if (axis == "T") cfg.algo.T = static_cast<int>(value);
  else if (axis == "K") cfg.algo.K = static_cast<int>(value);
  else if (axis == "M") cfg.algo.M = static_cast<int>(value);
  else if (axis == "H") cfg.algo.H = static_cast<int>(value);
  else if (axis == "gamma") cfg.algo.gamma = value;
  else if (axis == "lambda") cfg.algo.lambda = value;
  else if (axis == "epsilon") cfg.algo.epsilon = value;
  else if (axis == "w_entropy") cfg.algo.w_entropy = value;
  else if (axis == "learning_rate") cfg.algo.learning_rate = value;
  else if (axis == "total_steps") cfg.total_steps = static_cast<long long>(value);
  else if (axis == "action_repeat") cfg.action_repeat = static_cast<int>(value);
  else throw std::invalid_argument("sweep: unknown axis '" + axis + "'");
}

std::string axis_tag(const std::string& axis, double value) {
  return axis + trim_number(value);
}

}  // namespace

std::optional<RunSummary> try_load_summary(const fs::path& run_dir) {
  const fs::path file = run_dir / "summary.json";
  if (!fs::exists(file)) return std::nullopt;
  try {
    const json j = json::parse(detail::read_file(file.string()));
    RunSummary s;
    s.env = j.at("env").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    s.setting = j.at("setting").get<std::string>();
    s.config_hash = j.at("config_hash").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.iterations = j.at("iterations").get<long long>();
    s.env_steps = j.at("env_steps").get<long long>();
    s.final_mean_return = j.at("final_mean_return").get<double>();
    return s;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

ScoreTable sweep(const ExperimentConfig& base) {
  if (base.sweep_axes.empty())
    throw std::invalid_argument("sweep: config has no sweep axes");
  const std::vector<std::string> envs =
      base.sweep_envs.empty() ? std::vector<std::string>{base.env} : base.sweep_envs;

  // deterministic grid order: axes in map order, values in config order
  std::vector<std::string> axes;
  for (const auto& [axis, values] : base.sweep_axes) {
    if (values.empty()) throw std::invalid_argument("sweep: empty axis '" + axis + "'");
    axes.push_back(axis);
  }

  std::vector<RunScore> scores;
  std::vector<std::size_t> cursor(axes.size(), 0);
  bool done = false;
  while (!done) {
    for (const auto& env_name : envs) {
      ExperimentConfig cfg = base;
      cfg.env = env_name;
      cfg.setting.clear();
      std::string tag = to_string(base.algo.mode);
      for (std::size_t i = 0; i < axes.size(); ++i) {
        const double value = base.sweep_axes.at(axes[i])[cursor[i]];
        apply_axis(cfg, axes[i], value);
        tag += "_" + axis_tag(axes[i], value);
      }
      cfg.setting = tag;

      cfg.output_dir = (fs::path(base.output_dir) / env_name).string();
      for (std::uint64_t seed : cfg.seeds) {
        const fs::path run_dir =
            fs::path(cfg.output_dir) / cfg.setting_label() / ("seed" + std::to_string(seed));
        // reuse a finished grid point when its summary validates
        if (auto summary = try_load_summary(run_dir)) {
          if (summary->config_hash == cfg.config_hash() && summary->seed == seed &&
              summary->env == env_name && summary->setting == cfg.setting_label()) {
            scores.push_back({env_name, cfg.setting, summary->final_mean_return});
            continue;
          }
        }
        const RunArtifacts art = run_single(cfg, seed);
        scores.push_back({env_name, cfg.setting, art.final_mean_return});
      }
    }
    // advance the cartesian cursor
    done = true;
    for (std::size_t i = 0; i < axes.size(); ++i) {
      cursor[i] += 1;
      if (cursor[i] < base.sweep_axes.at(axes[i]).size()) {
        done = false;
        break;
      }
      cursor[i] = 0;
    }
  }

  ScoreTable table = normalize_scores(scores);
  detail::atomic_write((fs::path(base.output_dir) / "scores.csv").string(), table.to_csv());
  return table;
}

std::vector<RunScore> load_run_scores(const std::vector<std::string>& dirs) {
  std::vector<RunScore> scores;
  for (const auto& dir : dirs) {
    if (!fs::exists(dir)) throw std::invalid_argument("score: no such directory: " + dir);
    if (auto s = try_load_summary(dir)) {
      scores.push_back({s->env, s->setting, s->final_mean_return});
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "summary.json") {
        if (auto s = try_load_summary(entry.path().parent_path()))
          scores.push_back({s->env, s->setting, s->final_mean_return});
      }
    }
  }
  if (scores.empty()) throw std::invalid_argument("score: no run summaries found");
  return scores;
}

}  // namespace ppocma
