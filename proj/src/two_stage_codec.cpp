#include "ulc/two_stage_codec.hpp"

#include <algorithm>
#include <cmath>

#include "ulc/elias.hpp"
#include "ulc/vc_toolkit.hpp"

namespace ulc {

namespace {

// Stream tags; fixed forever so seeds stay reproducible across versions.
constexpr std::uint64_t kTagCodebook = 0x636f6465626f6f6bULL;
constexpr std::uint64_t kTagWait = 0x77616974ULL;
constexpr std::uint64_t kTagTrain = 0x747261696eULL;
constexpr std::uint64_t kTagHit = 0x686974ULL;

std::uint64_t wait_seed(std::uint64_t codebook_seed, std::uint64_t i) {
  return RandomStream(codebook_seed).derive({kTagWait, i}).key();
}

std::string format_r(double r) { return std::isinf(r) ? "inf" : format_number(r); }

double parse_r(const std::string& text) {
  if (text == "inf" || text == "infinity") return std::numeric_limits<double>::infinity();
  const auto v = parse_number_list(text);
  if (v.size() != 1) throw SpecError("'r' expects one number or 'inf'");
  return v[0];
}

}  // namespace

double family_vc_bound(const FamilySpec& family, Eigen::Index n) {
  switch (family.family) {
    case Family::GaussianIID: return km_bound(6, 3);
    case Family::GaussianAR: return km_bound(2 * family.ar_order + 2, 2);
    case Family::HMM: {
      const auto m = static_cast<int>(family.emissions.states());
      return km_bound(2 * m * m, static_cast<int>(n));
    }
  }
  throw ModelError("unknown family");
}

double delta_n(Eigen::Index n, double vc_dim, double scale) {
  if (n < 2) throw CodecError("delta_n needs n >= 2");
  if (!(vc_dim >= 1)) throw CodecError("delta_n needs V >= 1");
  if (!(scale > 0)) throw CodecError("delta_scale must be positive");
  const double nd = static_cast<double>(n);
  return scale * (std::sqrt(2048.0 * (vc_dim + 1.0) * std::log(nd)) / nd + 6.0 / std::pow(nd, 1.5));
}

// ---------------------------------------------------------------------------
// Configuration

CodecConfig CodecConfig::from(const KeyValues& kv) {
  CodecConfig c;
  c.family = family_spec_from(kv);
  c.n = static_cast<Eigen::Index>(kv.integer_or("n", c.n));
  c.eta = kv.number_or("eta", c.eta);
  if (kv.has("r")) {
    c.r = parse_r(kv.get("r"));
  } else if (c.family.family != Family::GaussianIID) {
    throw SpecError("dependent families need an explicit mixing exponent 'r'");
  }
  c.lambda = kv.number_or("lambda", c.lambda);
  c.delta_scale = kv.number_or("delta_scale", c.delta_scale);
  c.prior = ParameterPrior::from(kv);
  c.codebook_seed = static_cast<std::uint64_t>(kv.integer_or("codebook_seed", static_cast<long long>(c.codebook_seed)));
  c.max_wait = static_cast<std::uint64_t>(kv.integer_or("max_wait", static_cast<long long>(c.max_wait)));
  c.mc_samples = kv.integer_or("mc_samples", c.mc_samples);
  c.md_mc_samples = kv.integer_or("md_mc_samples", c.md_mc_samples);
  c.md_seed = static_cast<std::uint64_t>(kv.integer_or("md_seed", static_cast<long long>(c.md_seed)));
  c.train_size = static_cast<std::size_t>(kv.integer_or("train_size", static_cast<long long>(c.train_size)));
  c.init_size = static_cast<std::size_t>(kv.integer_or("init_size", static_cast<long long>(c.init_size)));
  c.max_iters = static_cast<int>(kv.integer_or("max_iters", c.max_iters));
  c.distortion.rho_max = kv.number_or("rho_max", c.distortion.rho_max);
  const std::string metric = kv.get_or("metric", "truncated_absolute");
  if (metric == "truncated_absolute") {
    c.distortion.base_metric = DistortionSpec::Metric::TruncatedAbsolute;
  } else if (metric == "truncated_euclidean") {
    c.distortion.base_metric = DistortionSpec::Metric::TruncatedEuclidean;
  } else {
    throw SpecError("unknown metric '" + metric + "'");
  }
  c.threads = static_cast<unsigned>(kv.integer_or("threads", 1));

  if (c.n < 2) throw SpecError("n must be at least 2");
  if (!(c.eta > 0)) throw SpecError("eta must be positive");
  if (!(c.r > 0)) throw SpecError("r must be positive");
  if (!(c.lambda > 0)) throw SpecError("lambda must be positive");
  if (!(c.delta_scale > 0)) throw SpecError("delta_scale must be positive");
  if (c.mc_samples < 1 || c.md_mc_samples < 1) throw SpecError("Monte Carlo sample counts must be positive");
  if (c.train_size < 1 || c.init_size < 1) throw SpecError("train_size and init_size must be positive");
  if (!(c.distortion.rho_max > 0)) throw SpecError("rho_max must be positive");
  c.candidates = candidate_set_from(c.family, kv);
  return c;
}

KeyValues CodecConfig::to_keyvalues() const {
  KeyValues kv;
  kv.set("family", family_name(family.family));
  if (family.family == Family::GaussianAR) kv.set("ar_order", std::to_string(family.ar_order));
  if (family.family == Family::HMM) {
    std::string means;
    for (Eigen::Index s = 0; s < family.emissions.states(); ++s) {
      if (s) means += ";";
      means += format_number_list(family.emissions.means.col(s));
    }
    kv.set("means", means);
    kv.set("sd", format_number_list(family.emissions.sd));
    kv.set("a0", format_number(family.a0));
  }
  kv.set("n", std::to_string(n));
  kv.set("eta", format_number(eta));
  kv.set("r", format_r(r));
  kv.set("lambda", format_number(lambda));
  kv.set("delta_scale", format_number(delta_scale));
  prior.write(kv);
  kv.set("codebook_seed", std::to_string(codebook_seed));
  kv.set("max_wait", std::to_string(max_wait));
  kv.set("mc_samples", std::to_string(mc_samples));
  kv.set("md_mc_samples", std::to_string(md_mc_samples));
  kv.set("md_seed", std::to_string(md_seed));
  kv.set("train_size", std::to_string(train_size));
  kv.set("init_size", std::to_string(init_size));
  kv.set("max_iters", std::to_string(max_iters));
  kv.set("rho_max", format_number(distortion.rho_max));
  kv.set("metric", distortion.base_metric == DistortionSpec::Metric::TruncatedAbsolute ? "truncated_absolute"
                                                                                       : "truncated_euclidean");
  kv.set("threads", std::to_string(threads));
  write_candidates(candidates, kv);
  return kv;
}

std::uint64_t CodecConfig::hash() const {
  // FNV-1a over the canonical text; the thread count does not affect output.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const KeyValues kv = to_keyvalues();
  for (const auto& [k, v] : kv.entries()) {
    if (k == "threads") continue;
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  return mix64(h);
}

// ---------------------------------------------------------------------------
// First stage

ParamVector FirstStageCodebook::entry(std::uint64_t i) const {
  if (i == 0) throw CodecError("codebook entries are numbered from 1");
  RandomStream rng = RandomStream(seed_).derive({kTagCodebook, i});
  return prior_.draw(family_, rng);
}

HitTest test_entry(const ParamVector& candidate, const ParamVector& theta_tilde, std::uint64_t mc_seed,
                   const CodecConfig& config) {
  HitTest t;
  const double threshold = config.threshold();
  if (candidate == theta_tilde || threshold >= 2.0) {
    t.hit = true;
    return t;
  }
  const SourceModel a = make_model(config.family, candidate);
  const SourceModel b = make_model(config.family, theta_tilde);
  if (const auto lb = variational_lower_bound(a, b, config.n)) {
    t.lower_bound = *lb;
    if (*lb > threshold) {
      t.prefiltered = true;
      return t;
    }
  }
  t.distance = variational_distance_mc(a, b, config.n, config.mc_samples, mc_seed);
  t.hit = t.distance.point_estimate <= threshold;
  return t;
}

std::optional<std::uint64_t> waiting_time(const ParamVector& theta_tilde, const FirstStageCodebook& codebook,
                                          const CodecConfig& config) {
  for (std::uint64_t i = 1; i <= config.max_wait; ++i) {
    if (test_entry(codebook.entry(i), theta_tilde, wait_seed(codebook.seed(), i), config).hit) return i;
  }
  return std::nullopt;
}

double estimate_hit_probability(const ParamVector& theta_tilde, const CodecConfig& config, std::int64_t draws,
                                std::uint64_t seed) {
  if (draws < 1) throw CodecError("draws must be positive");
  const FirstStageCodebook fresh(config.family, config.prior, RandomStream(seed).derive(kTagHit).key());
  std::int64_t hits = 0;
  for (std::int64_t k = 1; k <= draws; ++k) {
    const auto i = static_cast<std::uint64_t>(k);
    hits += test_entry(fresh.entry(i), theta_tilde, wait_seed(fresh.seed(), i), config).hit;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

// ---------------------------------------------------------------------------
// Descriptions

std::size_t TwoStageDescription::first_stage_bits() const {
  return flag ? 1 : 1 + static_cast<std::size_t>(elias_length(waiting_time));
}

BitString TwoStageDescription::to_bits() const {
  BitString out;
  out.push_back(flag);
  if (!flag) elias_append(out, waiting_time);
  out.append(codeword);
  return out;
}

Codec::Codec(CodecConfig config)
    : config_(std::move(config)), codebook_(config_.family, config_.prior, config_.codebook_seed) {
  config_.candidates.validate();
  if (config_.candidates.family.family != config_.family.family)
    throw CodecError("candidate set family differs from the codec family");
}

Codec::Codec(CodecConfig config, std::shared_ptr<const YatracosTable> table) : Codec(std::move(config)) {
  if (!table) throw CodecError("null Yatracos table");
  if (table->block_length() != config_.n || table->mc_samples() != config_.md_mc_samples ||
      table->candidates().members != config_.candidates.members)
    throw CodecError("shared Yatracos table does not match the codec configuration");
  std::call_once(table_once_, [&]() { table_ = std::move(table); });
}

const YatracosTable& Codec::table() const { return *shared_table(); }

std::shared_ptr<const YatracosTable> Codec::shared_table() const {
  std::call_once(table_once_, [&]() {
    table_ = std::make_shared<const YatracosTable>(config_.candidates, config_.n, config_.md_mc_samples,
                                                   config_.md_seed, config_.threads);
  });
  return table_;
}

VariableRateCode Codec::train_code(const ParamVector& theta, std::uint64_t seed) const {
  const SourceModel model = make_model(config_.family, theta);
  const auto n = config_.n;
  const SampleBlock path = sample_path(model, n * static_cast<Eigen::Index>(config_.train_size), seed);
  std::vector<Block> training;
  training.reserve(config_.train_size);
  for (std::size_t b = 0; b < config_.train_size; ++b)
    training.push_back(path.values.middleCols(static_cast<Eigen::Index>(b) * n, n));
  DesignOptions opt;
  opt.lambda = config_.lambda;
  opt.init_size = std::min(config_.init_size, config_.train_size);
  opt.seed = mix64(seed);
  opt.max_iters = config_.max_iters;
  return design_ecvq(training, n, config_.distortion, opt).code;
}

std::shared_ptr<const VariableRateCode> Codec::second_stage_code(std::uint64_t index) const {
  {
    std::shared_lock<std::shared_mutex> read(cache_lock_);
    const auto it = cache_.find(index);
    if (it != cache_.end()) return it->second;
  }
  // Built outside the lock; a racing builder produces an identical code.
  auto code = std::make_shared<const VariableRateCode>(
      train_code(codebook_.entry(index), RandomStream(config_.codebook_seed).derive({kTagTrain, index}).key()));
  std::unique_lock<std::shared_mutex> write(cache_lock_);
  return cache_.emplace(index, std::move(code)).first->second;
}

EncodeResult Codec::encode(const SampleBlock& block, const SampleBlock& memory) const {
  if (block.size() != config_.n) throw CodecError("block length must equal n");
  if (memory.size() != config_.memory_length())
    throw CodecError("memory length must equal m_n = " + std::to_string(config_.memory_length()));
  if (block.dim() != config_.family.letter_dim() || memory.dim() != config_.family.letter_dim())
    throw CodecError("letter dimension does not match the family");

  EncodeResult out;
  out.estimate = table().estimate(extract_blocks(memory, config_.layout()));
  out.theta_tilde = out.estimate.theta;
  const auto wait = waiting_time(out.theta_tilde, codebook_, config_);
  out.description.flag = !wait.has_value();
  out.description.waiting_time = wait.value_or(0);
  const std::uint64_t index = out.description.entry_index();
  out.theta_hat = codebook_.entry(index);

  const auto code = second_stage_code(index);
  out.codeword_index = min_lagrangian_encode(*code, block.values, config_.lambda, config_.distortion);
  out.description.codeword = code->codeword(out.codeword_index);
  out.reproduction.values = code->reproduction(out.codeword_index);
  out.distortion = rho_n(block.values, out.reproduction.values, config_.distortion);
  return out;
}

DecodeResult Codec::decode(BitReader& reader) const {
  const std::size_t start = reader.position();
  DecodeResult out;
  out.description.flag = reader.read_bit();
  if (!out.description.flag) {
    out.description.waiting_time = elias_decode(reader);
    if (out.description.waiting_time > config_.max_wait)
      throw ParseError("waiting time exceeds max_wait", start + 1);
  }
  out.entry_index = out.description.entry_index();
  out.theta_hat = codebook_.entry(out.entry_index);
  const auto code = second_stage_code(out.entry_index);
  const std::size_t cw_start = reader.position();
  out.codeword_index = code->decode_index(reader);
  out.description.codeword = code->codeword(out.codeword_index);
  if (reader.position() - cw_start != out.description.codeword.size())
    throw ParseError("codeword length mismatch", cw_start);
  out.reproduction.values = code->reproduction(out.codeword_index);
  return out;
}

DecodeResult Codec::decode(const TwoStageDescription& description) const {
  const BitString bits = description.to_bits();
  BitReader reader(bits);
  DecodeResult out = decode(reader);
  if (!reader.at_end()) throw ParseError("trailing bits after description", reader.position());
  return out;
}

DivergenceEstimate identification_error(const FamilySpec& family, const ParamVector& theta0,
                                        const ParamVector& theta_hat, Eigen::Index n, std::int64_t mc_samples,
                                        std::uint64_t seed) {
  if (theta0 == theta_hat) return DivergenceEstimate{0.0, 0.0, mc_samples};
  return variational_distance_mc(make_model(family, theta0), make_model(family, theta_hat), n, mc_samples, seed);
}

// ---------------------------------------------------------------------------
// Container

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) throw CodecError("container truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace

std::vector<std::uint8_t> write_container(const Container& container) {
  std::vector<std::uint8_t> out{'U', 'L', 'C', 'D'};
  put_le(out, kContainerVersion, 2);
  put_le(out, container.config_hash, 8);
  put_le(out, container.count, 4);
  put_le(out, container.payload.size(), 8);
  const auto packed = container.payload.pack();
  out.insert(out.end(), packed.begin(), packed.end());
  return out;
}

Container read_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || bytes[0] != 'U' || bytes[1] != 'L' || bytes[2] != 'C' || bytes[3] != 'D')
    throw CodecError("not a description container (bad magic)");
  std::size_t pos = 4;
  const auto version = get_le(bytes, pos, 2);
  if (version != kContainerVersion) throw CodecError("unsupported container version " + std::to_string(version));
  Container c;
  c.config_hash = get_le(bytes, pos, 8);
  c.count = static_cast<std::uint32_t>(get_le(bytes, pos, 4));
  const auto bits = get_le(bytes, pos, 8);
  const std::size_t payload_bytes = bytes.size() - pos;
  if (bits > payload_bytes * 8 || (bits + 7) / 8 != payload_bytes)
    throw CodecError("container bit length does not match the payload size");
  const std::vector<std::uint8_t> payload(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  c.payload = BitString::unpack(payload, bits);
  if (bits % 8 != 0 && (payload.back() & (0xFFU >> (bits % 8))) != 0)
    throw CodecError("container padding bits are not zero");
  return c;
}

}  // namespace ulc
