#include "edgellm/accuracy.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>

#include "edgellm/error.hpp"

namespace edgellm {

namespace {

void check_item(const MCItem& item, const std::string& where) {
  auto first = item.sentence.find('_');
  if (first == std::string::npos || item.sentence.find('_', first + 1) != std::string::npos) {
    throw Error(ErrorCode::MalformedItem, where + ": sentence must contain exactly one '_'");
  }
  if (item.options[0].empty() || item.options[1].empty()) {
    throw Error(ErrorCode::MalformedItem, where + ": options must be non-empty");
  }
  if (item.options[0] == item.options[1]) throw Error(ErrorCode::MalformedItem, where + ": options must differ");
  if (item.answer_index != 0 && item.answer_index != 1) {
    throw Error(ErrorCode::MalformedItem, where + ": answer must be 1 or 2");
  }
}

}  // namespace

std::vector<MCItem> parse_items(std::istream& in) {
  std::vector<MCItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedItem, where + ": not a JSON object");
    auto str = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_string()) {
        throw Error(ErrorCode::MalformedItem, where + ": missing string '" + key + "'");
      }
      return j[key].get<std::string>();
    };
    MCItem item;
    item.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::to_string(line_no);
    item.sentence = str("sentence");
    item.options = {str("option1"), str("option2")};
    std::string answer;
    if (j.contains("answer") && j["answer"].is_number_integer()) {
      answer = std::to_string(j["answer"].get<int>());
    } else {
      answer = str("answer");
    }
    if (answer == "1") {
      item.answer_index = 0;
    } else if (answer == "2") {
      item.answer_index = 1;
    } else {
      throw Error(ErrorCode::MalformedItem, where + ": answer must be \"1\" or \"2\"");
    }
    check_item(item, where);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<MCItem> load_items(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open items file '" + path + "'");
  return parse_items(in);
}

ScoreRequest realize_option(const MCItem& item, int option_index) {
  auto blank = item.sentence.find('_');
  if (blank == std::string::npos || item.sentence.find('_', blank + 1) != std::string::npos) {
    throw Error(ErrorCode::MalformedItem, "item '" + item.id + "': sentence must contain exactly one '_'");
  }
  if (option_index != 0 && option_index != 1) {
    throw Error(ErrorCode::MalformedItem, "item '" + item.id + "': option index out of range");
  }
  ScoreRequest req;
  req.context = item.sentence.substr(0, blank);
  req.continuation = item.options[static_cast<std::size_t>(option_index)] + item.sentence.substr(blank + 1);
  return req;
}

int choose_option(const std::array<double, 2>& lls) noexcept { return lls[1] > lls[0] ? 1 : 0; }

EvalResult evaluate(std::span<const MCItem> items, Backend& backend) {
  EvalResult result;
  for (const MCItem& item : items) {
    ItemOutcome outcome;
    outcome.id = item.id;
    try {
      for (int k = 0; k < 2; ++k) {
        outcome.option_lls[static_cast<std::size_t>(k)] = backend.score(realize_option(item, k));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CapabilityMissing) throw;
      result.unscored.emplace_back(item.id, e.what());
      continue;
    }
    outcome.chosen_index = choose_option(outcome.option_lls);
    outcome.correct = outcome.chosen_index == item.answer_index;
    ++result.total;
    if (outcome.correct) ++result.correct;
    result.per_item.push_back(std::move(outcome));
  }
  std::stable_sort(result.per_item.begin(), result.per_item.end(),
                   [](const ItemOutcome& a, const ItemOutcome& b) { return a.id < b.id; });
  std::stable_sort(result.unscored.begin(), result.unscored.end());
  result.accuracy = result.total == 0 ? 0.0 : static_cast<double>(result.correct) / static_cast<double>(result.total);
  return result;
}

std::string eval_result_to_json(const EvalResult& result, const std::string& model) {
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const ItemOutcome& o : result.per_item) {
    items.push_back({{"id", o.id},
                     {"chosen_index", o.chosen_index},
                     {"option_lls", {o.option_lls[0], o.option_lls[1]}},
                     {"correct", o.correct}});
  }
  nlohmann::ordered_json unscored = nlohmann::ordered_json::array();
  for (const auto& [id, reason] : result.unscored) unscored.push_back({{"id", id}, {"reason", reason}});
  nlohmann::ordered_json doc = {{"model", model},
                                {"total", result.total},
                                {"correct", result.correct},
                                {"accuracy", result.accuracy},
                                {"per_item", items},
                                {"unscored", unscored}};
  return doc.dump(2) + "\n";
}

}  // namespace edgellm
