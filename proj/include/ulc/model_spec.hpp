#pragma once

// Plain-text `key = value` grammar shared by model specifications and
// configuration files.
//
//   # comment to end of line
//   family = hmm
//   transition = 0.9, 0.1, 0.1, 0.9
//   means = 0; 5          (';' separates states, ',' separates coordinates)
//
// Entries are separated by whitespace or newlines; whitespace around '=' and
// ',' is ignored. Keys are case-sensitive and may not repeat.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ulc/source_models.hpp"

namespace ulc {

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class KeyValues {
 public:
  static KeyValues parse(std::string_view text);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  long long integer(const std::string& key) const;
  long long integer_or(const std::string& key, long long fallback) const;
  std::vector<double> numbers(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Canonical text: one `key = value` per line, keys sorted.
  std::string to_string() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::vector<double> parse_number_list(std::string_view text);
std::string format_number(double v);
std::string format_number_list(const Eigen::VectorXd& v);

struct ModelSpec {
  FamilySpec family;
  ParamVector theta;
};

/// Reads `family` plus the family's fields:
///   gaussian_iid: mean, sigma
///   gaussian_ar:  coeffs
///   hmm:          transition (row-major), means, optional sd, optional a0
ModelSpec parse_model_spec(std::string_view text);
ModelSpec model_spec_from(const KeyValues& kv);

/// Family-level fields only (no parameter vector), e.g. for codec configs.
FamilySpec family_spec_from(const KeyValues& kv);
ParamVector param_vector_from(const FamilySpec& family, const KeyValues& kv);

std::string format_model_spec(const ModelSpec& spec);

}  // namespace ulc
