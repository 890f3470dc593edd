#pragma once

// Augmented trial designs: which subjects carry S(1), B and S^c(1).
//   BIP:      B on the immunogenicity subcohort plus a random extra fraction
//   CPV:      S^c(1) on a random fraction of uninfected placebo recipients
//   BIP_CPV:  both

#include <string>

#include "vaxsurr/dft_cox.hpp"

namespace vaxsurr {

enum class DesignKind { Bip, Cpv, BipCpv };
enum class MissingPattern { Large, Medium };

struct DesignSpec {
  DesignKind kind = DesignKind::Bip;
  MissingPattern missing = MissingPattern::Medium;
  double ic_uninfected_frac = 0.50;  // uninfected vaccinees sampled into IC_V
  double bip_extra_frac = 0.375;     // non-IC subjects (both arms) with B measured
  double cpv_frac = 0.50;            // uninfected placebos vaccinated at closeout
  double cpv_noise_var = 0.0;        // exchangeable noise added to S^c(1)
  // Case-cohort sampling takes every infected subject, so infected placebo
  // recipients carry B under the BIP designs even though S(1) cannot be measured.
  bool bip_on_all_cases = true;

  static DesignSpec preset(DesignKind kind, MissingPattern missing);

  bool uses_bip() const { return kind != DesignKind::Cpv; }
  bool uses_cpv() const { return kind != DesignKind::Bip; }

  // Throws ConfigError for fractions outside [0, 1] or negative noise.
  void validate() const;

  bool operator==(const DesignSpec&) const = default;
};

std::string to_string(DesignKind kind);
std::string to_string(MissingPattern missing);
DesignKind parse_design_kind(const std::string& text);
MissingPattern parse_missing_pattern(const std::string& text);

// Measurement pattern actually present in a dataset.
DesignKind infer_design(const Dataset& data);

// Throws InputError if the dataset carries measurements the design excludes.
void check_design(const Dataset& data, const DesignSpec& design);

}  // namespace vaxsurr
