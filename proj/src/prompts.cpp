#include "actprompt/prompts.hpp"

#include <fstream>

#include "actprompt/errors.hpp"

namespace actprompt {

namespace {

const char* kOnes[] = {"",     "one", "two",   "three", "four",
                       "five", "six", "seven", "eight", "nine"};
const char* kTeens[] = {"ten",     "eleven",  "twelve",    "thirteen", "fourteen",
                        "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
const char* kTens[] = {"",      "",      "twenty", "thirty", "forty",
                       "fifty", "sixty", "seventy", "eighty", "ninety"};
const char* kOnesOrd[] = {"",      "first", "second",  "third",  "fourth",
                          "fifth", "sixth", "seventh", "eighth", "ninth"};
const char* kTeensOrd[] = {"tenth",     "eleventh",  "twelfth",     "thirteenth", "fourteenth",
                           "fifteenth", "sixteenth", "seventeenth", "eighteenth", "nineteenth"};
const char* kTensOrd[] = {"",       "",       "twentieth", "thirtieth", "fortieth",
                          "fiftieth", "sixtieth", "seventieth", "eightieth", "ninetieth"};

void check_numeral_range(int n, const char* what) {
  if (n < 1 || n > 99) {
    throw InputError(std::string(what) + " out of range [1, 99]: " + std::to_string(n));
  }
}

std::string render(const std::string& tmpl, const std::string& slot, const std::string& value) {
  std::string out = tmpl;
  size_t pos = 0;
  while ((pos = out.find(slot, pos)) != std::string::npos) {
    out.replace(pos, slot.size(), value);
    pos += value.size();
  }
  return out;
}

}  // namespace

std::string num_to_cardinal(int n) {
  check_numeral_range(n, "cardinal");
  if (n < 10) return kOnes[n];
  if (n < 20) return kTeens[n - 10];
  std::string word = kTens[n / 10];
  if (n % 10 != 0) word += std::string("-") + kOnes[n % 10];
  return word;
}

std::string ord_to_text(int i) {
  check_numeral_range(i, "ordinal");
  if (i < 10) return kOnesOrd[i];
  if (i < 20) return kTeensOrd[i - 10];
  if (i % 10 == 0) return kTensOrd[i / 10];
  return std::string(kTens[i / 10]) + "-" + kOnesOrd[i % 10];
}

std::string make_statistical_prompt(int k) {
  std::string noun = k == 1 ? "action" : "actions";
  return "this video clip contains " + num_to_cardinal(k) + " " + noun + " in total";
}

std::string make_ordinal_prompt(int i) {
  return "this is the " + ord_to_text(i) + " action in the video";
}

void VariantTable::validate() const {
  if (semantic_variants.empty() || integrated_variants.empty()) {
    throw InputError("variant table needs at least one template per section");
  }
  for (const auto& t : semantic_variants) {
    if (t.find("{vp}") == std::string::npos || t.find("{ord}") == std::string::npos) {
      throw InputError("semantic template missing {ord} or {vp} slot: '" + t + "'");
    }
  }
  for (const auto& t : integrated_variants) {
    if (t.find("{vp}") == std::string::npos) {
      throw InputError("integrated template missing {vp} slot: '" + t + "'");
    }
  }
}

VariantTable VariantTable::defaults() {
  VariantTable t;
  t.semantic_variants = {
      "{ord}, the person is performing the action step of {vp}",
      "{ord}, the person is performing the step of {vp}",
      "{ord}, the person performs the action of {vp}",
      "{ord}, the action being performed is {vp}",
      "{ord}, the person is doing the action step of {vp}",
      "the {ord} action step the person performs is {vp}",
      "the {ord} action in the video is {vp}",
      "the {ord} step of the activity is {vp}",
      "{ord}, the human is performing the action of {vp}",
      "{ord}, the person is carrying out the step of {vp}",
      "{ord}, the person is working on the step of {vp}",
      "as the {ord} step, the person is performing {vp}",
      "for the {ord} action, the person is performing {vp}",
      "{ord}, the current action step is {vp}",
      "{ord}, the video shows the action of {vp}",
      "{ord}, the person can be seen performing {vp}",
      "in the {ord} step, the person is performing {vp}",
      "{ord}, this action step is {vp}",
      "the person {ord} performs the action of {vp}",
  };
  t.integrated_variants = {
      "{ord}, {vp}",
      "{ord} step, {vp}",
      "the {ord} step is {vp}",
      "{ord} action, {vp}",
      "the {ord} action is {vp}",
      "{ord} of all, {vp}",
      "the {ord} thing to do is {vp}",
      "{ord}, they {vp}",
      "{ord}, the person will {vp}",
  };
  return t;
}

VariantTable VariantTable::canonical_only() {
  VariantTable full = defaults();
  VariantTable t;
  t.semantic_variants = {full.semantic_variants[0]};
  t.integrated_variants = {full.integrated_variants[0]};
  return t;
}

VariantTable VariantTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open variant table: " + path);
  VariantTable t;
  std::vector<std::string>* section = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (line == "[semantic]") {
      section = &t.semantic_variants;
    } else if (line == "[integrated]") {
      section = &t.integrated_variants;
    } else if (section == nullptr) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": template before any [semantic]/[integrated] section");
    } else {
      section->push_back(line);
    }
  }
  t.validate();
  return t;
}

std::vector<std::string> make_semantic_prompts(int i, const std::string& vp,
                                               const VariantTable& table) {
  if (vp.empty()) throw InputError("semantic prompt needs a non-empty verb phrase");
  table.validate();
  const std::string ord = ord_to_text(i);
  std::vector<std::string> prompts;
  prompts.reserve(table.semantic_variants.size());
  for (const auto& tmpl : table.semantic_variants) {
    prompts.push_back(render(render(tmpl, "{ord}", ord), "{vp}", vp));
  }
  return prompts;
}

std::vector<std::string> make_integrated_prompts(const std::vector<std::string>& vps,
                                                 const VariantTable& table) {
  if (vps.empty()) throw InputError("integrated prompt needs at least one verb phrase");
  table.validate();
  std::vector<std::string> prompts;
  prompts.reserve(table.integrated_variants.size());
  for (const auto& tmpl : table.integrated_variants) {
    std::string joined;
    for (size_t i = 0; i < vps.size(); ++i) {
      if (vps[i].empty()) throw InputError("integrated prompt has an empty verb phrase");
      if (i > 0) joined += ", ";
      std::string part = render(tmpl, "{ord}", ord_to_text(static_cast<int>(i) + 1));
      joined += render(part, "{vp}", vps[i]);
    }
    prompts.push_back(std::move(joined));
  }
  return prompts;
}

std::vector<std::string> build_prompt_corpus(const ActionVocab& vocab,
                                             const VariantTable& table, int k_max,
                                             const std::vector<std::string>& activities,
                                             const std::string& activity_template) {
  table.validate();
  std::vector<std::string> corpus;
  for (int k = 1; k <= k_max; ++k) {
    corpus.push_back(make_statistical_prompt(k));
    corpus.push_back(make_ordinal_prompt(k));
  }
  for (int i = 1; i <= k_max; ++i) {
    for (const auto& [id, vp] : vocab.entries) {
      for (auto& p : make_semantic_prompts(i, vp, table)) corpus.push_back(std::move(p));
      // short templates rendered at every ordinal so their words all enter
      // the corpus
      for (const auto& tmpl : table.integrated_variants) {
        corpus.push_back(render(render(tmpl, "{ord}", ord_to_text(i)), "{vp}", vp));
      }
    }
  }
  for (const auto& name : activities) {
    std::string prompt = activity_template;
    const std::string slot = "{activity}";
    size_t pos = prompt.find(slot);
    if (pos != std::string::npos) prompt.replace(pos, slot.size(), name);
    corpus.push_back(std::move(prompt));
  }
  return corpus;
}

PromptBundle build_prompt_bundle(const VideoCut& cut, const ActionVocab& vocab,
                                 const VariantTable& table) {
  if (cut.K < 1) throw InputError("cut has no action steps");
  PromptBundle b;
  b.statistical = make_statistical_prompt(cut.K);
  std::vector<std::string> vps;
  for (int i = 1; i <= cut.K; ++i) {
    const std::string& vp = vocab.phrase(cut.step_labels[static_cast<size_t>(i - 1)].action_id);
    b.ordinal.push_back(make_ordinal_prompt(i));
    b.semantic.push_back(make_semantic_prompts(i, vp, table));
    vps.push_back(vp);
  }
  b.integrated = make_integrated_prompts(vps, table);
  return b;
}

}  // namespace actprompt
