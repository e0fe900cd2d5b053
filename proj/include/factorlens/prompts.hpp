#pragma once
// Prompt templates and response parsers for text oracles. Each renderer
// produces the full prompt for one template id; each parser throws
// std::invalid_argument when the response does not follow the format.

#include <string>
#include <vector>

#include "factorlens/oracle.hpp"

namespace factorlens::prompts {

inline constexpr const char* kDecomposeQuery = "decompose_query";
inline constexpr const char* kGenerateStatements = "generate_statements";
inline constexpr const char* kExtractFactors = "extract_factors";
inline constexpr const char* kMergeFactors = "merge_factors";
inline constexpr const char* kCheckBinarySupport = "check_binary_support";
inline constexpr const char* kCheckOverlappingFactor = "check_overlapping_factor";
inline constexpr const char* kCheckConditionCoverage = "check_condition_coverage";
inline constexpr const char* kFactorDetermination = "factor_determination";
inline constexpr const char* kMonteCarloSampling = "monte_carlo_sampling";
inline constexpr const char* kVerbalProbing = "verbal_probing";

std::string render_verbal_probing(const FactorSet& fs, const FactorConfiguration& config);
std::string render_factor_determination(const FactorSet& fs, int factor,
                                        const std::string& condition);
std::string render_monte_carlo_sampling(const FactorSet& fs, const PartialConfiguration& observed,
                                        const std::string& condition);
std::string render_decompose_query(const std::string& query);
std::string render_generate_statements(const std::string& scenario, const std::string& outcome,
                                       int count, const std::vector<std::string>& exclude);
std::string render_extract_factors(const std::string& scenario,
                                   const std::vector<std::string>& positive,
                                   const std::vector<std::string>& negative);
std::string render_merge_factors(const std::string& scenario,
                                 const std::vector<FactorDraft>& candidates, int max_factors);
std::string render_check_binary_support(const FactorSet& fs, int factor);
std::string render_check_overlapping_factor(const FactorSet& fs, int a, int b);
std::string render_check_condition_coverage(const FactorSet& fs, const std::string& condition);

// Appended to the prompt for the single automatic retry.
std::string reprompt_suffix(const std::string& bad_response);

VerbalLevel parse_verbal(const std::string& response);
Determination parse_determination(const std::string& response);
// Returns the completed configuration; observed bits are copied, every
// unknown factor must appear in the response.
FactorConfiguration parse_completion(const std::string& response, const FactorSet& fs,
                                     const PartialConfiguration& observed);
QueryDecomposition parse_decomposition(const std::string& response);
std::vector<std::string> parse_statements(const std::string& response);
std::vector<FactorDraft> parse_factor_drafts(const std::string& response);
SupportVerdict parse_support(const std::string& response);
OverlapVerdict parse_overlap(const std::string& response);
CoverageVerdict parse_coverage(const std::string& response);

}  // namespace factorlens::prompts
