#include "crowdmt/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "crowdmt/errors.hpp"
#include "crowdmt/evaluation.hpp"

namespace crowdmt {

bool EnsembleWeights::on_simplex() const {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return !w.empty() && std::abs(sum - 1.0) <= 1e-12;
}

EnsembleWeights normalize_weights(const std::vector<double>& raw) {
  EnsembleWeights out;
  out.normalized = true;
  double sum = 0.0;
  for (double v : raw) {
    if (v < 0.0) throw ValidationError("ensemble weights must be nonnegative");
    sum += v;
  }
  out.w.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.w[i] = sum > 0.0 ? raw[i] / sum : 1.0 / static_cast<double>(raw.size());
  }
  return out;
}

std::vector<double> average_ensemble(const PredictionMatrix& pm) {
  if (pm.column_count() != 3) {
    throw ValidationError("averaging ensemble needs exactly 3 columns, got " + std::to_string(pm.column_count()));
  }
  const auto& a = pm.columns[0].second;
  const auto& b = pm.columns[1].second;
  const auto& c = pm.columns[2].second;
  std::vector<double> out(pm.rows());
  // Written as an offset from the first column so identical columns come
  // back unchanged.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + ((b[i] - a[i]) + (c[i] - a[i])) / 3.0;
  return out;
}

std::vector<double> weighted_ensemble(const PredictionMatrix& pm, const EnsembleWeights& w) {
  if (!w.normalized || !w.on_simplex()) throw ValidationError("weighted ensemble needs normalized weights");
  if (w.w.size() != pm.column_count()) throw ValidationError("weight count does not match prediction columns");
  std::vector<double> out(pm.rows(), 0.0);
  for (std::size_t m = 0; m < w.w.size(); ++m) {
    const auto& col = pm.columns[m].second;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w.w[m] * col[i];
  }
  // Rounding can push a blend of identical values a hair past them.
  for (std::size_t i = 0; i < out.size(); ++i) {
    double lo = pm.columns[0].second[i], hi = lo;
    for (const auto& [name, col] : pm.columns) {
      lo = std::min(lo, col[i]);
      hi = std::max(hi, col[i]);
    }
    out[i] = std::clamp(out[i], lo, hi);
  }
  return out;
}

void DEConfig::validate(int dims) const {
  if (population_per_dim * dims < 4) throw ConfigError("differential evolution needs a population of at least 4");
  if (!(lower_bound < upper_bound)) throw ConfigError("differential evolution bounds must be ordered");
  if (lower_bound < 0.0) throw ConfigError("ensemble weight bounds must be nonnegative");
  if (!(tolerance >= 0.0) || max_iterations < 0) throw ConfigError("invalid DE stopping criteria");
  if (!(crossover >= 0.0 && crossover <= 1.0)) throw ConfigError("DE crossover must be in [0,1]");
  if (!(mutation_min > 0.0 && mutation_min <= mutation_max)) throw ConfigError("DE mutation range invalid");
}

namespace {

double population_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

DEResult optimize_weights_de(const PredictionMatrix& pm, const DEConfig& cfg) {
  constexpr int kDims = 3;
  if (pm.column_count() != kDims) throw ValidationError("weight optimization needs exactly 3 prediction columns");
  pm.validate();
  cfg.validate(kDims);
  {
    const auto pos = std::count(pm.labels.begin(), pm.labels.end(), 1);
    if (pos == 0 || pos == static_cast<long>(pm.labels.size())) {
      throw ValidationError("AUC undefined: optimization subset contains a single class");
    }
  }

  // Candidates are ranked by AUC, then by the gap between the class means
  // of the blend. The gap only separates equal-AUC candidates, which pulls
  // flat AUC plateaus towards the best-separating blend.
  struct Score {
    double auc;
    double gap;
  };
  const auto positives = static_cast<double>(std::count(pm.labels.begin(), pm.labels.end(), 1));
  const auto negatives = static_cast<double>(pm.labels.size()) - positives;
  auto objective = [&](const std::vector<double>& raw) {
    const auto blend = weighted_ensemble(pm, normalize_weights(raw));
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < blend.size(); ++i) (pm.labels[i] ? pos : neg) += blend[i];
    return Score{roc_auc(blend, pm.labels), pos / positives - neg / negatives};
  };
  auto not_worse = [](const Score& a, const Score& b) { return a.auc > b.auc || (a.auc == b.auc && a.gap >= b.gap); };

  const int np = cfg.population_per_dim * kDims;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> in_bounds(cfg.lower_bound, cfg.upper_bound);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_member(0, np - 1);
  std::uniform_int_distribution<int> pick_dim(0, kDims - 1);

  std::vector<std::vector<double>> population(np, std::vector<double>(kDims));
  std::vector<Score> score(np);
  population[0].assign(kDims, std::clamp(1.0 / kDims, cfg.lower_bound, cfg.upper_bound));
  for (int i = 1; i < np; ++i) {
    for (double& v : population[i]) v = in_bounds(rng);
  }
  for (int i = 0; i < np; ++i) score[i] = objective(population[i]);

  DEResult result;
  result.equal_weight_auc = score[0].auc;

  auto converged = [&] {
    std::vector<double> aucs(np), gaps(np);
    for (int i = 0; i < np; ++i) {
      aucs[i] = score[i].auc;
      gaps[i] = score[i].gap;
    }
    return population_std(aucs) < cfg.tolerance && population_std(gaps) < cfg.tolerance;
  };

  int generation = 0;
  while (true) {
    if (converged()) {
      result.converged = true;
      break;
    }
    if (generation >= cfg.max_iterations) break;
    ++generation;

    const double f = cfg.mutation_min + (cfg.mutation_max - cfg.mutation_min) * unit(rng);
    auto next = population;
    auto next_score = score;
    for (int i = 0; i < np; ++i) {
      int r1, r2, r3;
      do r1 = pick_member(rng); while (r1 == i);
      do r2 = pick_member(rng); while (r2 == i || r2 == r1);
      do r3 = pick_member(rng); while (r3 == i || r3 == r1 || r3 == r2);
      const int forced = pick_dim(rng);
      std::vector<double> trial = population[i];
      for (int d = 0; d < kDims; ++d) {
        const bool take = d == forced || unit(rng) < cfg.crossover;
        if (!take) continue;
        double v = population[r1][d] + f * (population[r2][d] - population[r3][d]);
        if (v < cfg.lower_bound || v > cfg.upper_bound) v = in_bounds(rng);
        trial[d] = v;
      }
      const Score e = objective(trial);
      if (not_worse(e, score[i])) {
        next[i] = std::move(trial);
        next_score[i] = e;
      }
    }
    population = std::move(next);
    score = std::move(next_score);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < score.size(); ++i) {
    if (!not_worse(score[best], score[i])) best = i;
  }
  result.weights = normalize_weights(population[best]);
  result.achieved_auc = score[best].auc;
  result.iterations = generation;
  return result;
}

std::string weights_to_json(int fold, const EnsembleWeights& w, const std::string& optimized_on, double achieved_auc) {
  nlohmann::ordered_json j;
  j["fold"] = fold;
  j["weights"] = w.w;
  j["optimized_on"] = optimized_on;
  j["achieved_auc"] = achieved_auc;
  return j.dump(1) + "\n";
}

WeightsRecord weights_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  WeightsRecord r;
  r.fold = j.at("fold").get<int>();
  r.weights = normalize_weights(j.at("weights").get<std::vector<double>>());
  r.optimized_on = j.at("optimized_on").get<std::string>();
  r.achieved_auc = j.at("achieved_auc").get<double>();
  return r;
}

}  // namespace crowdmt
