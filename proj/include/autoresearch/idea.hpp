#pragma once
#include "autoresearch/corpus.hpp"
#include "autoresearch/gateway.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace autoresearch::idea {

inline constexpr std::string_view kHypothesisTemplateId = "hypothesis/v1";
inline constexpr std::string_view kPlanTemplateId = "plan/v1";

struct Hypothesis {
    std::string method;
    std::string rationale;

    // First line of the method text.
    std::string title() const;
    bool operator==(const Hypothesis&) const = default;
};

struct PlanStage {
    int number = 0;
    std::string title; // marker line without the number and trailing colon
    std::string text;  // the whole stage including nested lines
    bool operator==(const PlanStage&) const = default;
};

struct ExperimentPlan {
    std::vector<PlanStage> design;
    std::string rationale;
    std::string raw; // the experiment block as returned
    bool operator==(const ExperimentPlan&) const = default;
};

struct ResearchIdea {
    corpus::PromptContext context;
    std::vector<corpus::RelatedWork> related;
    Hypothesis hypothesis;
    ExperimentPlan plan;
    std::string provider_id;
    std::string extraction_template{corpus::kExtractionTemplateId};
    std::string hypothesis_template{kHypothesisTemplateId};
    std::string plan_template{kPlanTemplateId};

    bool operator==(const ResearchIdea&) const = default;
};

std::string render_related(const std::vector<corpus::RelatedWork>& related);

std::string hypothesis_prompt(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                              std::string_view feedback = {});
std::string plan_prompt(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                        const Hypothesis& hypothesis, std::string_view feedback = {});

// Throws ParseError when "Method:" or "Rationale:" is missing or empty.
Hypothesis parse_hypothesis(std::string_view response);
std::string render_hypothesis(const Hypothesis& h);

// Top-level "N." markers (fewer than two leading spaces), sorted by number.
std::vector<PlanStage> split_stages(std::string_view block);

// Throws ParseError on missing headers, EmptyPlan when no stage is found.
ExperimentPlan parse_plan(std::string_view response);
std::string render_plan(const ExperimentPlan& p);

// One re-ask on ParseError, then the error propagates.
Hypothesis generate_hypothesis(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                               llm::Gateway& gateway, std::string_view feedback = {});
ExperimentPlan generate_plan(const corpus::PromptContext& context, const std::vector<corpus::RelatedWork>& related,
                             const Hypothesis& hypothesis, llm::Gateway& gateway, std::string_view feedback = {});

ResearchIdea assemble_idea(corpus::PromptContext context, std::vector<corpus::RelatedWork> related,
                           Hypothesis hypothesis, ExperimentPlan plan, std::string provider_id = {});

// Regenerates hypothesis and plan with the prior idea and feedback appended.
ResearchIdea refine_idea(const ResearchIdea& prior, std::string_view feedback, llm::Gateway& gateway);

nlohmann::json to_json(const ResearchIdea& idea);
// Throws SchemaError naming the missing or mistyped field.
ResearchIdea idea_from_json(const nlohmann::json& j);

// Sorted keys, two-space indent, trailing newline.
std::string serialize_idea(const ResearchIdea& idea);
ResearchIdea deserialize_idea(std::string_view text);
void save_idea(const ResearchIdea& idea, const std::string& path);
ResearchIdea load_idea(const std::string& path);

} // namespace autoresearch::idea
