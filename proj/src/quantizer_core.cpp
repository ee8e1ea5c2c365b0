#include "ulc/quantizer_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>

namespace ulc {

namespace {

constexpr int kMaxCodeLength = 62;

void check_block_shapes(const Block& x, const Block& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw QuantizerError("block shape mismatch: " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                         " vs " + std::to_string(y.rows()) + "x" + std::to_string(y.cols()));
}

// Sum of per-letter distortions without the shape check; callers validate.
double rho_sum(const Block& x, const Block& y, const DistortionSpec& spec) {
  if (x.rows() == 1) return (x.array() - y.array()).abs().min(spec.rho_max).sum();
  if (spec.base_metric == DistortionSpec::Metric::TruncatedAbsolute)
    return (x - y).cwiseAbs().colwise().sum().array().min(spec.rho_max).sum();
  return (x - y).colwise().norm().array().min(spec.rho_max).sum();
}

}  // namespace

double DistortionSpec::letter(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y) const {
  const double base = base_metric == Metric::TruncatedAbsolute ? (x - y).lpNorm<1>() : (x - y).norm();
  return std::min(base, rho_max);
}

double rho_n(const Block& x, const Block& xhat, const DistortionSpec& spec) {
  check_block_shapes(x, xhat);
  if (x.cols() == 0) throw QuantizerError("rho_n on empty blocks");
  return rho_sum(x, xhat, spec) / static_cast<double>(x.cols());
}

double rho_n(const SampleBlock& x, const SampleBlock& xhat, const DistortionSpec& spec) {
  return rho_n(x.values, xhat.values, spec);
}

double kraft_sum(const std::vector<int>& lengths) {
  double s = 0.0;
  for (int l : lengths) s += std::ldexp(1.0, -l);
  return s;
}

namespace {

std::vector<std::size_t> canonical_order(const std::vector<int>& lengths) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  return order;
}

void validate_lengths(const std::vector<int>& lengths) {
  if (lengths.empty()) throw QuantizerError("code needs at least one entry");
  for (int l : lengths) {
    if (l < 0 || l > kMaxCodeLength) throw QuantizerError("code length out of range: " + std::to_string(l));
  }
  if (kraft_sum(lengths) > 1.0) throw QuantizerError("lengths violate the Kraft inequality");
}

}  // namespace

std::vector<BitString> canonical_codewords(const std::vector<int>& lengths) {
  validate_lengths(lengths);
  std::vector<BitString> out(lengths.size());
  const auto order = canonical_order(lengths);
  std::uint64_t code = 0;
  int prev = lengths[order.front()];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int len = lengths[order[k]];
    if (k > 0) {
      ++code;
      code <<= (len - prev);
    }
    prev = len;
    BitString w;
    w.append_uint(code, len);
    out[order[k]] = std::move(w);
  }
  return out;
}

VariableRateCode::VariableRateCode(Eigen::Index n, Eigen::Index dim, std::vector<Block> reproductions,
                                   std::vector<int> lengths)
    : n_(n), dim_(dim), reproductions_(std::move(reproductions)), lengths_(std::move(lengths)) {
  if (n_ < 1 || dim_ < 1) throw QuantizerError("code needs positive block length and letter dimension");
  if (reproductions_.size() != lengths_.size()) throw QuantizerError("one length per reproduction required");
  for (const Block& b : reproductions_) {
    if (b.rows() != dim_ || b.cols() != n_) throw QuantizerError("reproduction has the wrong shape");
  }
  codewords_ = canonical_codewords(lengths_);

  by_length_ = canonical_order(lengths_);
  const int max_len = lengths_[by_length_.back()];
  first_code_.assign(static_cast<std::size_t>(max_len) + 1, 0);
  first_pos_.assign(static_cast<std::size_t>(max_len) + 1, 0);
  count_.assign(static_cast<std::size_t>(max_len) + 1, 0);
  for (std::size_t k = by_length_.size(); k-- > 0;) {
    const auto len = static_cast<std::size_t>(lengths_[by_length_[k]]);
    ++count_[len];
    first_pos_[len] = k;
  }
  for (std::size_t len = 0; len <= static_cast<std::size_t>(max_len); ++len) {
    if (count_[len] == 0) continue;
    // Codewords are consecutive within a length, so the first one is enough.
    const BitString& w = codewords_[by_length_[first_pos_[len]]];
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < w.size(); ++i) v = (v << 1) | (w[i] ? 1U : 0U);
    first_code_[len] = v;
  }
}

std::size_t VariableRateCode::decode_index(BitReader& reader) const {
  if (reproductions_.empty()) throw QuantizerError("decode with an empty code");
  if (count_[0] == 1) return by_length_[0];
  const std::size_t start = reader.position();
  std::uint64_t v = 0;
  for (std::size_t len = 1; len < count_.size(); ++len) {
    v = (v << 1) | (reader.read_bit() ? 1U : 0U);
    if (count_[len] > 0 && v >= first_code_[len] && v - first_code_[len] < count_[len])
      return by_length_[first_pos_[len] + (v - first_code_[len])];
  }
  throw ParseError("bits match no codeword", start);
}

bool VariableRateCode::is_prefix_free() const {
  for (std::size_t i = 0; i < codewords_.size(); ++i) {
    for (std::size_t j = 0; j < codewords_.size(); ++j) {
      if (i != j && codewords_[j].starts_with(codewords_[i])) return false;
    }
  }
  return true;
}

double entry_cost(const VariableRateCode& code, std::size_t entry, const Block& x, double lambda,
                  const DistortionSpec& spec) {
  const Block& y = code.reproduction(entry);
  check_block_shapes(x, y);
  const double n = static_cast<double>(x.cols());
  return (rho_sum(x, y, spec) + lambda * code.length(entry)) / n;
}

std::size_t min_lagrangian_encode(const VariableRateCode& code, const Block& x, double lambda,
                                  const DistortionSpec& spec) {
  if (code.empty()) throw QuantizerError("encode with an empty code");
  check_block_shapes(x, code.reproduction(0));
  // Costs are compared as n * (rho_n + lambda l / n) to avoid a division per entry.
  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < code.size(); ++i) {
    const double rate_part = lambda * code.length(i);
    if (rate_part >= best_cost) continue;
    const double c = rho_sum(x, code.reproduction(i), spec) + rate_part;
    if (c < best_cost) {
      best_cost = c;
      best = i;
    }
  }
  return best;
}

LagrangianReport lagrangian_performance(const VariableRateCode& code, const std::vector<Block>& eval_set,
                                        double lambda, const DistortionSpec& spec) {
  if (eval_set.empty()) throw QuantizerError("empty evaluation set");
  const double n = static_cast<double>(code.block_length());
  double d_sum = 0.0, r_sum = 0.0, l_sum = 0.0, l_sq = 0.0;
  for (const Block& x : eval_set) {
    const std::size_t i = min_lagrangian_encode(code, x, lambda, spec);
    const double d = rho_sum(x, code.reproduction(i), spec) / n;
    const double r = code.length(i) / n;
    const double l = d + lambda * r;
    d_sum += d;
    r_sum += r;
    l_sum += l;
    l_sq += l * l;
  }
  const double count = static_cast<double>(eval_set.size());
  LagrangianReport rep;
  rep.lambda = lambda;
  rep.blocks = static_cast<std::int64_t>(eval_set.size());
  rep.distortion = d_sum / count;
  rep.rate = r_sum / count;
  rep.lagrangian = rep.distortion + lambda * rep.rate;
  const double mean = l_sum / count;
  const double var = count > 1 ? std::max(0.0, (l_sq - count * mean * mean) / (count - 1)) : 0.0;
  rep.std_error = std::sqrt(var / count);
  return rep;
}

int length_cap(Eigen::Index n, double lambda, const DistortionSpec& spec) {
  if (!(lambda > 0)) throw QuantizerError("lambda must be positive");
  const double cap = std::floor(2.0 * static_cast<double>(n) * spec.rho_max / lambda);
  return static_cast<int>(std::min(cap, static_cast<double>(kMaxCodeLength)));
}

namespace {

struct Partition {
  std::vector<std::size_t> cell;
  std::vector<double> rho;  // per-letter distortion to the assigned entry
  double lagrangian = 0.0;
};

Partition partition(const std::vector<Block>& training, const std::vector<Block>& repro,
                    const std::vector<int>& lengths, double lambda, const DistortionSpec& spec) {
  const double n = static_cast<double>(training.front().cols());
  Partition p;
  p.cell.resize(training.size());
  p.rho.resize(training.size());
  double total = 0.0;
  for (std::size_t t = 0; t < training.size(); ++t) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    double arg_rho = 0.0;
    for (std::size_t i = 0; i < repro.size(); ++i) {
      const double rate_part = lambda * lengths[i];
      if (rate_part >= best) continue;
      const double r = rho_sum(training[t], repro[i], spec);
      if (r + rate_part < best) {
        best = r + rate_part;
        arg = i;
        arg_rho = r;
      }
    }
    p.cell[t] = arg;
    p.rho[t] = arg_rho / n;
    total += best / n;
  }
  p.lagrangian = total / static_cast<double>(training.size());
  return p;
}

// Best single codeword among a deterministic spread of training points.
std::pair<Block, double> best_zero_rate(const std::vector<Block>& training, const DistortionSpec& spec,
                                        std::size_t candidates) {
  const std::size_t t = training.size();
  const std::size_t k = std::max<std::size_t>(1, std::min(candidates, t));
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t idx = c * t / k;
    double s = 0.0;
    for (const Block& x : training) {
      s += rho_sum(x, training[idx], spec);
      if (s >= best) break;
    }
    if (s < best) {
      best = s;
      arg = idx;
    }
  }
  const double n = static_cast<double>(training.front().cols());
  return {training[arg], best / n / static_cast<double>(t)};
}

}  // namespace

DesignResult design_ecvq(const std::vector<Block>& training, Eigen::Index n, const DistortionSpec& spec,
                         const DesignOptions& options) {
  if (training.empty()) throw QuantizerError("empty training set");
  if (options.init_size < 1) throw QuantizerError("init_size must be at least 1");
  if (training.size() < options.init_size) throw QuantizerError("training set smaller than init_size");
  const Eigen::Index dim = training.front().rows();
  for (const Block& b : training) {
    if (b.cols() != n || b.rows() != dim) throw QuantizerError("training block has the wrong shape");
  }
  const double lambda = options.lambda;
  const int cap = length_cap(n, lambda, spec);

  DesignResult result;
  auto zero_rate = [&]() {
    auto [block, cost] = best_zero_rate(training, spec, options.zero_rate_candidates);
    return std::make_pair(VariableRateCode(n, dim, {block}, {0}), cost);
  };
  if (cap < 1) {
    auto [code, cost] = zero_rate();
    result.code = std::move(code);
    result.history = {cost};
    result.used_zero_rate = true;
    return result;
  }

  // Initial codebook: distinct training blocks in a seeded random order, at
  // most 2^cap of them so uniform lengths respect the cap.
  const std::size_t max_entries =
      cap >= 62 ? options.init_size : std::min<std::size_t>(options.init_size, std::size_t{1} << cap);
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RandomStream rng(options.seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<Block> repro;
  for (std::size_t idx : order) {
    if (repro.size() == max_entries) break;
    const bool seen = std::any_of(repro.begin(), repro.end(), [&](const Block& b) { return b == training[idx]; });
    if (!seen) repro.push_back(training[idx]);
  }
  const int uniform_len =
      repro.size() == 1 ? 0 : static_cast<int>(std::ceil(std::log2(static_cast<double>(repro.size()))));
  std::vector<int> lengths(repro.size(), uniform_len);

  Partition part = partition(training, repro, lengths, lambda, spec);
  result.history.push_back(part.lagrangian);
  const double t_count = static_cast<double>(training.size());

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const double before = part.lagrangian;

    // Drop entries nobody uses; nothing is reassigned so L is unchanged.
    std::vector<std::size_t> counts(repro.size(), 0);
    for (std::size_t c : part.cell) ++counts[c];
    std::vector<std::size_t> remap(repro.size(), 0);
    std::vector<Block> kept;
    std::vector<int> kept_len;
    std::vector<std::size_t> kept_counts;
    for (std::size_t i = 0; i < repro.size(); ++i) {
      if (counts[i] == 0) continue;
      remap[i] = kept.size();
      kept.push_back(std::move(repro[i]));
      kept_len.push_back(lengths[i]);
      kept_counts.push_back(counts[i]);
    }
    repro = std::move(kept);
    lengths = std::move(kept_len);
    for (auto& c : part.cell) c = remap[c];

    // Shannon lengths from cell frequencies, accepted when they satisfy the
    // cap and do not lengthen the training description.
    std::vector<int> shannon(repro.size());
    bool fits = true;
    double old_bits = 0.0, new_bits = 0.0;
    for (std::size_t i = 0; i < repro.size(); ++i) {
      const double q = static_cast<double>(kept_counts[i]) / t_count;
      shannon[i] = q >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log2(q) - 1e-12));
      if (shannon[i] > cap) fits = false;
      old_bits += static_cast<double>(kept_counts[i]) * lengths[i];
      new_bits += static_cast<double>(kept_counts[i]) * shannon[i];
    }
    if (fits && new_bits <= old_bits && kraft_sum(shannon) <= 1.0) lengths = shannon;

    // Medoid update: within each cell try members as the new reproduction.
    std::vector<std::vector<std::size_t>> members(repro.size());
    for (std::size_t t = 0; t < training.size(); ++t) members[part.cell[t]].push_back(t);
    RandomStream pick = RandomStream(options.seed).derive({0x6d65646fULL, static_cast<std::uint64_t>(iter)});
    for (std::size_t i = 0; i < repro.size(); ++i) {
      const auto& cell = members[i];
      double current = 0.0;
      for (std::size_t t : cell) current += rho_sum(training[t], repro[i], spec);
      std::vector<std::size_t> cands = cell;
      if (cands.size() > options.medoid_candidates) {
        for (std::size_t k = 0; k < options.medoid_candidates; ++k)
          std::swap(cands[k], cands[k + pick.below(cands.size() - k)]);
        cands.resize(options.medoid_candidates);
      }
      double best = current;
      std::size_t arg = training.size();
      for (std::size_t c : cands) {
        double s = 0.0;
        for (std::size_t t : cell) {
          s += rho_sum(training[t], training[c], spec);
          if (s >= best) break;
        }
        if (s < best) {
          best = s;
          arg = c;
        }
      }
      if (arg < training.size()) repro[i] = training[arg];
    }

    part = partition(training, repro, lengths, lambda, spec);
    result.history.push_back(part.lagrangian);
    result.iterations = iter + 1;
    if (before - part.lagrangian <= options.tolerance * std::max(before, 1e-300)) break;
  }

  // Final pruning of unused entries keeps the reported code minimal.
  std::vector<std::size_t> counts(repro.size(), 0);
  for (std::size_t c : part.cell) ++counts[c];
  std::vector<Block> final_repro;
  std::vector<int> final_len;
  for (std::size_t i = 0; i < repro.size(); ++i) {
    if (counts[i] == 0) continue;
    final_repro.push_back(repro[i]);
    final_len.push_back(lengths[i]);
  }
  if (final_repro.size() == 1) final_len[0] = 0;
  result.code = VariableRateCode(n, dim, std::move(final_repro), std::move(final_len));

  const double designed = lagrangian_performance(result.code, training, lambda, spec).lagrangian;
  auto [zr_code, zr_cost] = zero_rate();
  if (zr_cost < designed) {
    result.code = std::move(zr_code);
    result.used_zero_rate = true;
    result.history.push_back(zr_cost);
  } else if (designed < result.history.back()) {
    result.history.push_back(designed);
  }
  return result;
}

void DiscreteDistribution::validate() const {
  if (support.size() != static_cast<std::size_t>(weights.size()))
    throw QuantizerError("support and weights differ in size");
  if ((weights.array() < 0).any()) throw QuantizerError("negative probability weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12) throw QuantizerError("weights do not sum to one");
}

double DiscreteDistribution::entropy_bits() const {
  double h = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) > 0) h -= weights(i) * std::log2(weights(i));
  }
  return h;
}

double wasserstein_exact_small(const DiscreteDistribution& p, const DiscreteDistribution& q,
                               const DistortionSpec& spec) {
  p.validate();
  q.validate();
  const std::size_t rows = p.support.size(), cols = q.support.size();
  if (rows * cols > 25) throw QuantizerError("transport instance exceeds 25 variables");
  if (rows == 0 || cols == 0) throw QuantizerError("empty support");

  // Network: source 0, P nodes 1..rows, Q nodes rows+1..rows+cols, sink last.
  struct Edge {
    std::size_t to;
    double cap;
    double cost;
    std::size_t rev;
  };
  const std::size_t nodes = rows + cols + 2, source = 0, sink = nodes - 1;
  std::vector<std::vector<Edge>> g(nodes);
  auto add = [&](std::size_t a, std::size_t b, double cap, double cost) {
    g[a].push_back({b, cap, cost, g[b].size()});
    g[b].push_back({a, 0.0, -cost, g[a].size() - 1});
  };
  for (std::size_t i = 0; i < rows; ++i) add(source, 1 + i, p.weights(static_cast<Eigen::Index>(i)), 0.0);
  for (std::size_t j = 0; j < cols; ++j) add(1 + rows + j, sink, q.weights(static_cast<Eigen::Index>(j)), 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) add(1 + i, 1 + rows + j, 2.0, rho_n(p.support[i], q.support[j], spec));

  constexpr double eps = 1e-15;
  double total = 0.0;
  for (;;) {
    // Bellman-Ford: residual costs can be negative on reverse edges.
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<std::pair<std::size_t, std::size_t>> via(nodes, {nodes, 0});
    dist[source] = 0.0;
    for (std::size_t round = 0; round + 1 < nodes; ++round) {
      bool changed = false;
      for (std::size_t a = 0; a < nodes; ++a) {
        if (!std::isfinite(dist[a])) continue;
        for (std::size_t e = 0; e < g[a].size(); ++e) {
          const Edge& ed = g[a][e];
          if (ed.cap > eps && dist[a] + ed.cost < dist[ed.to] - 1e-15) {
            dist[ed.to] = dist[a] + ed.cost;
            via[ed.to] = {a, e};
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    if (!std::isfinite(dist[sink])) break;
    double push = std::numeric_limits<double>::infinity();
    for (std::size_t v = sink; v != source; v = via[v].first) push = std::min(push, g[via[v].first][via[v].second].cap);
    if (push <= eps) break;
    for (std::size_t v = sink; v != source; v = via[v].first) {
      Edge& ed = g[via[v].first][via[v].second];
      ed.cap -= push;
      g[ed.to][ed.rev].cap += push;
    }
    total += push * dist[sink];
  }
  return std::max(0.0, total);
}

double variational_distance_discrete(const DiscreteDistribution& p, const DiscreteDistribution& q) {
  std::vector<Block> points;
  std::vector<double> diff;
  auto locate = [&](const Block& b) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (points[i].rows() == b.rows() && points[i].cols() == b.cols() && points[i] == b) return i;
    }
    points.push_back(b);
    diff.push_back(0.0);
    return points.size() - 1;
  };
  for (std::size_t i = 0; i < p.support.size(); ++i) diff[locate(p.support[i])] += p.weights(static_cast<Eigen::Index>(i));
  for (std::size_t j = 0; j < q.support.size(); ++j) diff[locate(q.support[j])] -= q.weights(static_cast<Eigen::Index>(j));
  double s = 0.0;
  for (double d : diff) s += std::abs(d);
  return s;
}

double brute_force_optimal_lagrangian(const DiscreteDistribution& p, const std::vector<Block>& reproduction_points,
                                      double lambda, const std::vector<int>& length_menu, const DistortionSpec& spec) {
  p.validate();
  const std::size_t m = reproduction_points.size();
  if (m == 0 || m > 4) throw QuantizerError("brute force needs between one and four reproduction points");
  if (length_menu.empty()) throw QuantizerError("empty length menu");
  for (int l : length_menu) {
    if (l < 0 || l > kMaxCodeLength) throw QuantizerError("length menu entry out of range");
  }
  const double n = static_cast<double>(reproduction_points.front().cols());

  // rho[x][y] once; every code is then a table lookup.
  std::vector<std::vector<double>> rho(p.support.size(), std::vector<double>(m));
  for (std::size_t x = 0; x < p.support.size(); ++x)
    for (std::size_t y = 0; y < m; ++y) rho[x][y] = rho_n(p.support[x], reproduction_points[y], spec);

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> chosen;
  std::vector<int> lens;
  std::function<void(std::size_t)> assign = [&](std::size_t k) {
    if (k == chosen.size()) {
      if (kraft_sum(lens) > 1.0) return;
      double l = 0.0;
      for (std::size_t x = 0; x < p.support.size(); ++x) {
        double c = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < chosen.size(); ++s) c = std::min(c, rho[x][chosen[s]] + lambda * lens[s] / n);
        l += p.weights(static_cast<Eigen::Index>(x)) * c;
      }
      best = std::min(best, l);
      return;
    }
    for (int len : length_menu) {
      lens[k] = len;
      assign(k + 1);
    }
  };
  for (std::uint32_t mask = 1; mask < (1U << m); ++mask) {
    chosen.clear();
    for (std::size_t y = 0; y < m; ++y)
      if (mask & (1U << y)) chosen.push_back(y);
    lens.assign(chosen.size(), 0);
    assign(0);
  }
  if (!std::isfinite(best)) throw QuantizerError("no Kraft-feasible length assignment in the menu");
  return best;
}

ZeroMemoryCode convert_memory_to_zero_memory(const MemoryCode& mc, double lambda, const DistortionSpec& spec) {
  constexpr int kMaxStates = 1 << 16;
  if (mc.memory_states < 1 || mc.memory_states > kMaxStates)
    throw QuantizerError("memory alphabet is not enumerable");
  if (mc.encoder.size() != mc.source_alphabet.size()) throw QuantizerError("encoder table needs one row per source letter");
  ZeroMemoryCode out;
  out.code = mc.code;
  out.encoder.resize(mc.source_alphabet.size());
  for (std::size_t x = 0; x < mc.source_alphabet.size(); ++x) {
    const auto& row = mc.encoder[x];
    if (row.size() != static_cast<std::size_t>(mc.memory_states))
      throw QuantizerError("encoder row needs one entry per memory state");
    std::vector<std::size_t> reachable(row);
    std::sort(reachable.begin(), reachable.end());
    reachable.erase(std::unique(reachable.begin(), reachable.end()), reachable.end());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : reachable) {
      if (i >= mc.code.size()) throw QuantizerError("encoder refers to a missing entry");
      const double c = entry_cost(mc.code, i, mc.source_alphabet[x], lambda, spec);
      if (c < best) {
        best = c;
        out.encoder[x] = i;
      }
    }
  }
  return out;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>) {
    std::memcpy(&bits, &v, sizeof v);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw QuantizerError("codebook bytes truncated");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  if constexpr (std::is_same_v<T, double>) {
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_codebook(const VariableRateCode& code) {
  std::vector<std::uint8_t> out;
  put<std::uint64_t>(out, code.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(code.block_length()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(code.letter_dim()));
  for (const Block& b : code.reproductions())
    for (Eigen::Index k = 0; k < b.size(); ++k) put<double>(out, b.data()[k]);
  for (int l : code.lengths()) put<std::uint8_t>(out, static_cast<std::uint8_t>(l));
  return out;
}

VariableRateCode deserialize_codebook(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const auto count = take<std::uint64_t>(bytes, pos);
  const auto n = take<std::uint32_t>(bytes, pos);
  const auto dim = take<std::uint32_t>(bytes, pos);
  if (n == 0 || dim == 0) throw QuantizerError("codebook header has a zero dimension");
  const std::uint64_t per_block = 8ULL * n * dim;
  if (count == 0 || count > (bytes.size() - pos) / (per_block + 1))
    throw QuantizerError("codebook entry count does not match the payload");
  std::vector<Block> repro(count, Block(dim, n));
  for (auto& b : repro)
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = take<double>(bytes, pos);
  std::vector<int> lengths(count);
  for (auto& l : lengths) l = take<std::uint8_t>(bytes, pos);
  if (pos != bytes.size()) throw QuantizerError("trailing bytes after codebook");
  return VariableRateCode(n, dim, std::move(repro), std::move(lengths));
}

}  // namespace ulc
