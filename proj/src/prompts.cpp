#include "factorlens/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace factorlens::prompts {
namespace {

using nlohmann::json;

std::string trim_lower(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  std::string out = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Pulls the outermost JSON object or array out of a chatty response.
json extract_json(const std::string& response, char open) {
  const char close = open == '{' ? '}' : ']';
  const auto b = response.find(open);
  const auto e = response.rfind(close);
  if (b == std::string::npos || e == std::string::npos || e < b) {
    throw std::invalid_argument("response contains no JSON payload");
  }
  json j = json::parse(response.substr(b, e - b + 1), nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument("response JSON is malformed");
  return j;
}

FactorDraft draft_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("factor entry is not an object");
  FactorDraft d;
  d.name = j.value("name", "");
  d.positive_description = j.value("positive", "");
  d.negative_description = j.value("negative", "");
  if (d.name.empty() || d.positive_description.empty() || d.negative_description.empty()) {
    throw std::invalid_argument("factor entry needs name, positive and negative");
  }
  return d;
}

void describe_factor(std::ostringstream& os, const Factor& f) {
  os << "- " << f.name << ": 1 = " << f.positive_description << "; 0 = "
     << f.negative_description << "\n";
}

const char* kFactorFormat =
    "Answer with a JSON array of objects {\"name\": short_snake_case_name, \"positive\": "
    "meaning of value 1, \"negative\": meaning of value 0}, and nothing else.";

}  // namespace

std::string render_verbal_probing(const FactorSet& fs, const FactorConfiguration& config) {
  std::ostringstream os;
  os << "You are assessing a hypothetical decision scenario.\n"
     << "Scenario: " << fs.scenario() << "\n"
     << "Consider a situation with exactly these characteristics:\n";
  for (const Factor& f : fs.factors()) {
    os << "- " << (config.bit(f.id) ? f.positive_description : f.negative_description) << "\n";
  }
  os << "How likely is the outcome \"" << fs.outcome_positive() << "\" (as opposed to \""
     << fs.outcome_negative() << "\")?\n"
     << "Answer with exactly one of: very unlikely, unlikely, somewhat unlikely, neutral, "
        "somewhat likely, likely, very likely.";
  return os.str();
}

std::string render_factor_determination(const FactorSet& fs, int factor,
                                        const std::string& condition) {
  const Factor& f = fs.at(factor);
  std::ostringstream os;
  os << "Scenario: " << fs.scenario() << "\n"
     << "Condition: " << condition << "\n"
     << "Factor \"" << f.name << "\": value 1 means \"" << f.positive_description
     << "\"; value 0 means \"" << f.negative_description << "\".\n"
     << "Does the condition imply the factor is 1, imply it is 0, or leave it undetermined?\n"
     << "Answer with exactly one of: 1, 0, undetermined.";
  return os.str();
}

std::string render_monte_carlo_sampling(const FactorSet& fs, const PartialConfiguration& observed,
                                        const std::string& condition) {
  std::ostringstream os;
  os << "Scenario: " << fs.scenario() << "\n"
     << "Condition: " << condition << "\n"
     << "Known factors:\n";
  for (const auto& [id, value] : observed) {
    const Factor& f = fs.at(id);
    os << "- " << f.name << " = " << (value ? 1 : 0) << " ("
       << (value ? f.positive_description : f.negative_description) << ")\n";
  }
  os << "Imagine one concrete, plausible situation consistent with the condition and decide "
        "the unknown factors together, so that they fit each other.\n"
     << "Unknown factors:\n";
  for (const Factor& f : fs.factors()) {
    if (!observed.contains(f.id)) describe_factor(os, f);
  }
  os << "Answer with a JSON object mapping each unknown factor name to 0 or 1, and nothing else.";
  return os.str();
}

std::string render_decompose_query(const std::string& query) {
  return "Split the following decision query into the general decision scenario and the "
         "specific condition being asked about.\n"
         "Query: " + query + "\n"
         "Answer with a JSON object {\"scenario\": ..., \"condition\": ...}, and nothing else.";
}

std::string render_generate_statements(const std::string& scenario, const std::string& outcome,
                                       int count, const std::vector<std::string>& exclude) {
  std::ostringstream os;
  os << "Scenario: " << scenario << "\n"
     << "Write " << count << " distinct, comprehensive situational descriptions that would cause "
     << "the outcome \"" << outcome << "\". Each description should cover a different aspect of "
     << "the situation.\n";
  if (!exclude.empty()) {
    os << "Do not repeat any of these:\n";
    for (const auto& s : exclude) os << "- " << s << "\n";
  }
  os << "Answer with a JSON array of strings, and nothing else.";
  return os.str();
}

std::string render_extract_factors(const std::string& scenario,
                                   const std::vector<std::string>& positive,
                                   const std::vector<std::string>& negative) {
  std::ostringstream os;
  os << "Scenario: " << scenario << "\n"
     << "Statements supporting the first outcome:\n";
  for (const auto& s : positive) os << "- " << s << "\n";
  os << "Statements supporting the second outcome:\n";
  for (const auto& s : negative) os << "- " << s << "\n";
  os << "Summarize these statements into semantically distinct binary factors. Value 1 is the "
        "positive form of an aspect and value 0 its negative form.\n"
     << kFactorFormat;
  return os.str();
}

std::string render_merge_factors(const std::string& scenario,
                                 const std::vector<FactorDraft>& candidates, int max_factors) {
  std::ostringstream os;
  os << "Scenario: " << scenario << "\n"
     << "The following " << candidates.size() << " candidate binary factors are too many. Merge "
     << "related ones so that at most " << max_factors << " remain.\n";
  for (const auto& d : candidates) {
    os << "- " << d.name << ": 1 = " << d.positive_description << "; 0 = "
       << d.negative_description << "\n";
  }
  os << kFactorFormat;
  return os.str();
}

std::string render_check_binary_support(const FactorSet& fs, int factor) {
  const Factor& f = fs.at(factor);
  std::ostringstream os;
  os << "Scenario: " << fs.scenario() << "\n"
     << "Outcomes: \"" << fs.outcome_positive() << "\" versus \"" << fs.outcome_negative()
     << "\"\n"
     << "Factor \"" << f.name << "\": 1 = " << f.positive_description << "; 0 = "
     << f.negative_description << "\n"
     << "Check whether the two values of this factor support different outcomes. If not, "
        "propose a reformulated factor or null to discard it.\n"
     << "Answer with a JSON object {\"pass\": true|false, \"rationale\": ..., \"reformulation\": "
        "{\"name\", \"positive\", \"negative\"} or null}, and nothing else.";
  return os.str();
}

std::string render_check_overlapping_factor(const FactorSet& fs, int a, int b) {
  const Factor& fa = fs.at(a);
  const Factor& fb = fs.at(b);
  std::ostringstream os;
  os << "Scenario: " << fs.scenario() << "\n"
     << "Factor A \"" << fa.name << "\": 1 = " << fa.positive_description << "; 0 = "
     << fa.negative_description << "\n"
     << "Factor B \"" << fb.name << "\": 1 = " << fb.positive_description << "; 0 = "
     << fb.negative_description << "\n"
     << "Check whether the two factors describe overlapping aspects. If they overlap, propose "
        "one merged factor.\n"
     << "Answer with a JSON object {\"overlap\": true|false, \"rationale\": ..., \"merged\": "
        "{\"name\", \"positive\", \"negative\"} or null}, and nothing else.";
  return os.str();
}

std::string render_check_condition_coverage(const FactorSet& fs, const std::string& condition) {
  std::ostringstream os;
  os << "Scenario: " << fs.scenario() << "\n"
     << "Condition: " << condition << "\n"
     << "Factors:\n";
  for (const Factor& f : fs.factors()) describe_factor(os, f);
  os << "Split the condition into information units and check that every decision-relevant "
        "unit maps to one of the factors. For unmapped units propose new binary factors.\n"
     << "Answer with a JSON object {\"covered\": true|false, \"unmapped\": [strings], "
        "\"new_factors\": [{\"name\", \"positive\", \"negative\"}]}, and nothing else.";
  return os.str();
}

std::string reprompt_suffix(const std::string& bad_response) {
  return "\n\nYour previous answer could not be parsed:\n" + bad_response +
         "\nAnswer again and follow the required format exactly.";
}

VerbalLevel parse_verbal(const std::string& response) {
  auto level = parse_level(response);
  if (!level) throw std::invalid_argument("not a verbal probability level");
  return *level;
}

Determination parse_determination(const std::string& response) {
  const std::string s = trim_lower(response);
  if (s == "1") return Determination::kTrue;
  if (s == "0") return Determination::kFalse;
  if (s == "undetermined") return Determination::kUndetermined;
  throw std::invalid_argument("expected 1, 0 or undetermined");
}

FactorConfiguration parse_completion(const std::string& response, const FactorSet& fs,
                                     const PartialConfiguration& observed) {
  const json j = extract_json(response, '{');
  std::vector<int> bits(static_cast<std::size_t>(fs.size()), 0);
  for (const Factor& f : fs.factors()) {
    if (auto it = observed.find(f.id); it != observed.end()) {
      bits[static_cast<std::size_t>(f.id)] = it->second ? 1 : 0;
      continue;
    }
    if (!j.contains(f.name)) throw std::invalid_argument("completion omits factor " + f.name);
    const json& v = j.at(f.name);
    int bit = -1;
    if (v.is_number_integer()) bit = v.get<int>();
    if (v.is_boolean()) bit = v.get<bool>() ? 1 : 0;
    if (v.is_string()) bit = v.get<std::string>() == "1" ? 1 : v.get<std::string>() == "0" ? 0 : -1;
    if (bit != 0 && bit != 1) throw std::invalid_argument("completion value for " + f.name + " is not 0/1");
    bits[static_cast<std::size_t>(f.id)] = bit;
  }
  return FactorConfiguration(bits);
}

QueryDecomposition parse_decomposition(const std::string& response) {
  const json j = extract_json(response, '{');
  QueryDecomposition q{j.value("scenario", ""), j.value("condition", "")};
  if (q.scenario.empty() || q.condition.empty()) {
    throw std::invalid_argument("decomposition needs scenario and condition");
  }
  return q;
}

std::vector<std::string> parse_statements(const std::string& response) {
  const json j = extract_json(response, '[');
  std::vector<std::string> out;
  for (const auto& s : j) {
    if (!s.is_string()) throw std::invalid_argument("statement is not a string");
    out.push_back(s.get<std::string>());
  }
  return out;
}

std::vector<FactorDraft> parse_factor_drafts(const std::string& response) {
  const json j = extract_json(response, '[');
  std::vector<FactorDraft> out;
  for (const auto& e : j) out.push_back(draft_from_json(e));
  return out;
}

SupportVerdict parse_support(const std::string& response) {
  const json j = extract_json(response, '{');
  if (!j.contains("pass") || !j.at("pass").is_boolean()) {
    throw std::invalid_argument("support verdict needs boolean pass");
  }
  SupportVerdict v;
  v.pass = j.at("pass").get<bool>();
  v.rationale = j.value("rationale", "");
  if (j.contains("reformulation") && !j.at("reformulation").is_null()) {
    v.reformulation = draft_from_json(j.at("reformulation"));
  }
  return v;
}

OverlapVerdict parse_overlap(const std::string& response) {
  const json j = extract_json(response, '{');
  if (!j.contains("overlap") || !j.at("overlap").is_boolean()) {
    throw std::invalid_argument("overlap verdict needs boolean overlap");
  }
  OverlapVerdict v;
  v.overlap = j.at("overlap").get<bool>();
  v.rationale = j.value("rationale", "");
  if (j.contains("merged") && !j.at("merged").is_null()) v.merged = draft_from_json(j.at("merged"));
  return v;
}

CoverageVerdict parse_coverage(const std::string& response) {
  const json j = extract_json(response, '{');
  if (!j.contains("covered") || !j.at("covered").is_boolean()) {
    throw std::invalid_argument("coverage verdict needs boolean covered");
  }
  CoverageVerdict v;
  v.covered = j.at("covered").get<bool>();
  for (const auto& u : j.value("unmapped", json::array())) v.unmapped_units.push_back(u.get<std::string>());
  for (const auto& f : j.value("new_factors", json::array())) v.new_factors.push_back(draft_from_json(f));
  return v;
}

}  // namespace factorlens::prompts
