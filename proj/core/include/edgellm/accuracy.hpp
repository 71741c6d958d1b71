#pragma once

#include <array>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "edgellm/backends.hpp"

namespace edgellm {

/// Two-option fill-in-the-blank item; the sentence holds exactly one "_".
struct MCItem {
  std::string id;
  std::string sentence;
  std::array<std::string, 2> options;
  int answer_index = 0;

  bool operator==(const MCItem&) const = default;
};

/// Reads JSON-Lines {id, sentence, option1, option2, answer: "1"|"2"}.
/// Throws MalformedItem (with line number) on invalid items.
std::vector<MCItem> parse_items(std::istream& in);
std::vector<MCItem> load_items(const std::string& path);

/// Splits the sentence at its blank: context is everything before "_",
/// continuation is the chosen option followed by everything after it.
ScoreRequest realize_option(const MCItem& item, int option_index);

struct ItemOutcome {
  std::string id;
  int chosen_index = 0;
  std::array<double, 2> option_lls{};
  bool correct = false;

  bool operator==(const ItemOutcome&) const = default;
};

struct EvalResult {
  std::int64_t total = 0;    // scored items
  std::int64_t correct = 0;
  double accuracy = 0.0;     // correct / total, 0 when nothing was scored
  std::vector<ItemOutcome> per_item;                 // sorted by id
  std::vector<std::pair<std::string, std::string>> unscored;  // (id, reason)

  bool operator==(const EvalResult&) const = default;
};

/// Index of the larger log-likelihood; ties go to option 0.
int choose_option(const std::array<double, 2>& lls) noexcept;

/// Scores both options of every item by cumulative log-likelihood and picks
/// the larger. Items whose scoring fails are reported as unscored and left
/// out of the denominator; CapabilityMissing aborts the whole evaluation.
EvalResult evaluate(std::span<const MCItem> items, Backend& backend);

std::string eval_result_to_json(const EvalResult& result, const std::string& model);

}  // namespace edgellm
