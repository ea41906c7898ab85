#pragma once

#include <string_view>

namespace uscore {

/// Decomposition of a negative log-likelihood (or negative ELBO) into a
/// regularization term `d`, a log-normalizing constant `a` and a square
/// normalized distance `m`, with `l = d + a + m`.
struct ScoreBreakdown {
  double d = 0.0;
  double a = 0.0;
  double m = 0.0;
  double l = 0.0;

  static ScoreBreakdown from_terms(double d, double a, double m) { return {d, a, m, d + a + m}; }
  bool operator==(const ScoreBreakdown&) const = default;
};

enum class ScoreKind { L, D, A, M };

inline constexpr ScoreKind kAllScoreKinds[] = {ScoreKind::L, ScoreKind::D, ScoreKind::A, ScoreKind::M};

std::string_view to_string(ScoreKind kind);
/// Accepts "L", "D", "A", "M" (case-insensitive); throws ConfigError otherwise.
ScoreKind parse_score_kind(std::string_view text);

}  // namespace uscore
