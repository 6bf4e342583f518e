#pragma once

#include <string>
#include <vector>

#include "actprompt/dataset.hpp"
#include "actprompt/sampler.hpp"

namespace actprompt {

// English cardinal, lowercase, 1..99.
std::string num_to_cardinal(int n);

// English ordinal word, lowercase, 1..99 ("first", "second", ...).
std::string ord_to_text(int i);

// "this video clip contains <cardinal> actions in total" (singular for K=1).
std::string make_statistical_prompt(int k);

// "this is the <ordinal> action in the video".
std::string make_ordinal_prompt(int i);

// Paraphrase templates. Semantic templates have {ord} and {vp} slots, the
// short integrated templates have {vp} and optionally {ord}. Variant 0 of
// each list is the canonical form.
struct VariantTable {
  std::vector<std::string> semantic_variants;
  std::vector<std::string> integrated_variants;

  void validate() const;  // throws InputError

  // Shipped default: 19 semantic and 9 integrated templates.
  static VariantTable defaults();
  // Just the canonical template of each kind.
  static VariantTable canonical_only();
  // Variant table file: one template per line under "[semantic]" and
  // "[integrated]" section headers.
  static VariantTable load(const std::string& path);
};

// One rendered string per semantic variant for ordinal position i.
std::vector<std::string> make_semantic_prompts(int i, const std::string& vp,
                                               const VariantTable& table);

// One rendered string per short variant: the K short-semantic strings of
// vps joined in order with ", ".
std::vector<std::string> make_integrated_prompts(const std::vector<std::string>& vps,
                                                 const VariantTable& table);

// The four prompt levels for one cut.
struct PromptBundle {
  std::string statistical;
  std::vector<std::string> ordinal;                // length K
  std::vector<std::vector<std::string>> semantic;  // K x variants
  std::vector<std::string> integrated;             // one per short variant

  int K() const { return static_cast<int>(ordinal.size()); }
};

PromptBundle build_prompt_bundle(const VideoCut& cut, const ActionVocab& vocab,
                                 const VariantTable& table);

// Every string the pipeline can render for this vocabulary: statistical and
// ordinal prompts up to k_max, all semantic/integrated variants per (ordinal,
// action), and activity prompts. Feeds the tokenizer's vocabulary build.
std::vector<std::string> build_prompt_corpus(const ActionVocab& vocab,
                                             const VariantTable& table, int k_max,
                                             const std::vector<std::string>& activities = {},
                                             const std::string& activity_template =
                                                 "the person is making {activity}");

}  // namespace actprompt
