#pragma once

// Prompt assets. Texts marked verbatim must not be edited: scores and cache
// keys depend on every byte. Placeholders use {name} and are filled by
// fill_template().

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "gem/error.hpp"

namespace gem::prompts {

inline constexpr std::string_view kVersion = "2024.1";

// --- judgment preprocessing (verbatim) -------------------------------------
inline const std::string kPreprocessSystem =
    "Carefully read the text of a scientific paper review. You should summarize each evaluation in the review in a "
    "separate line. Begin each summary line with one of the following phrases: 'The reviewer appreciates', 'The "
    "reviewer criticizes', 'The reviewer questions', 'The reviewer suggests'. You need to keep the summary as "
    "concise as possible, excluding specific details about the paper's content, such as topics, ideas, methods, "
    "findings, and any mathematical symbols.\n\n"
    "You should ensure that even if multiple evaluations are mentioned in the same sentence in the original review, "
    "you should still split it into separate lines. For example, you should not output a line like 'The reviewer "
    "appreciates the well-written paper and good experimental performance'. In contrast, you should output 'The "
    "reviewer appreciates the well-written paper' and 'The reviewer appreciates good experimental performance' in "
    "two lines.";

// --- judgment prediction, used for every PMI estimate (verbatim) ------------
inline const std::string kPredictionSystem =
    "You are the second reviewer for a scientific paper. You are given the abstract of the paper and a list of "
    "review judgments from the first reviewer, starting with 'The reviewer appreciates/criticizes/questions/"
    "suggests'. Your task is to provide your own judgments of the paper based on the given materials. You should "
    "create a separate line for each judgment you have, starting with 'The reviewer appreciates/criticizes/"
    "questions/suggests'. Ensure your judgments are concise, excluding specific details about the paper's content.";

inline const std::string kPredictionUser =
    "[Abstract of the paper]\n\n{synopsis}\n\n[Review judgments from the first reviewer]\n\n{candidate}";

// --- review generation for the benchmark (verbatim) -------------------------
inline const std::string kReviewGenerationSystem =
    "You are given a paper submission for a top-tier Machine Learning conference which you need to write a detailed "
    "review. Please read the paper carefully. Once you have finished reading, please provide the following in your "
    "review:\n\n"
    "First, write a concise summary of the key points and contributions of the paper inside <summary> tags.\n\n"
    "Next, think critically about the strengths and weaknesses of the submission. Inside <strengths> tags, give a "
    "numbered list of at least 4 key reasons why this paper should potentially be accepted to the conference. For "
    "each reason, use sub-bullet points to provide detailed arguments and evidence from the paper to support that "
    "reason.\n\n"
    "Then, inside <weaknesses> tags, give a numbered list of at least 4 key reasons why this paper should "
    "potentially be rejected from the conference. Again, for each reason, use sub-bullet points to provide detailed "
    "arguments and evidence from the paper to support that reason.\n\n"
    "After weighing the reasons for and against, think of some open questions you have about the work. List your "
    "questions inside <questions> tags.\n\n"
    "Remember, as a reviewer your job is to rigorously evaluate the strengths and weaknesses of the work and to "
    "provide critical but constructive feedback to the authors. Be thorough, specific and detailed in your "
    "arguments and feedback. Highlight both the positives and negatives you see, and justify your points carefully "
    "with reference to the content of the paper.";

// --- author-stated strengths and weaknesses (verbatim) ----------------------
inline const std::string kAsswSystem =
    "You are given a paper submission for a top-tier Machine Learning conference. Your goal is to identify and list "
    "the strengths and weaknesses that the paper claims about itself. This task requires careful reading of the "
    "paper.\n\n"
    "Please follow these steps to complete the task:\n\n"
    "1. Carefully read the entire paper submission. As you read, identify instances where the authors mention "
    "strengths or positive aspects of their research, methodology, results, or contributions. These are the "
    "strengths claimed by the paper. Also, identify instances where the authors mention limitations, weaknesses, or "
    "areas for future improvement in their work. These are the weaknesses claimed by the paper.\n\n"
    "2. Compile your findings into two separate lists: one for strengths and one for weaknesses.\n\n"
    "3. For each list, write each point on a separate line, keeping it concise. Add an extra blank line between each "
    "point for clarity.\n\n"
    "4. Format your output as follows:\n\n"
    "<strengths_claimed_by_the_paper>\n\n"
    "[List each strength claimed by the paper in separate lines, with an extra blank line between each point]\n\n"
    "</strengths_claimed_by_the_paper>\n\n"
    "<weaknesses_claimed_by_the_paper>\n\n"
    "[List each weakness claimed by the paper in separate lines, with an extra blank line between each point]\n\n"
    "</weaknesses_claimed_by_the_paper>\n\n"
    "Important: Focus only on the strengths and weaknesses that the paper claims about itself. Do not include your "
    "own evaluation or opinion of the paper's merits or shortcomings. Do not include the strengths and weaknesses of "
    "the baseline. Your task is to report what the authors themselves have stated about their work's strengths and "
    "limitations.";

// --- deletion & completion (verbatim) ---------------------------------------
inline const std::string kMissingSentence = "[There is one missing sentence]";

inline const std::string kCompletionSystem =
    "You are tasked with completing missing sentences of a peer review evaluation given by the user while keeping "
    "all its existing sentences. Your goal is to complete all missing sentences indicated by [There is one missing "
    "sentence] of this peer review evaluation, following these rules:\n\n"
    "- Insert new sentences that don't contribute significant information.\n"
    "- Place these sentences between existing sentences where they seem most natural.\n"
    "- Keep the overall language style similar.\n"
    "- Ensure these added sentences don't contradict or substantially alter the original content.\n\n"
    "Remember to maintain the essence and order of the original content while completing all missing sentences "
    "indicated by [There is one missing sentence].";

// --- abstract-only review (verbatim) ----------------------------------------
inline const std::string kAbstractOnlySystem =
    "You are given an abstract of a paper submission for a top-tier Machine Learning conference. You need to write a "
    "detailed peer review of the paper with only the abstract. Please read the abstract carefully. Once you have "
    "finished reading, please provide the following in your review:\n\n"
    "First, write a concise summary of the key points and contributions of the paper in \"Summary Of The Paper\" "
    "section.\n\n"
    "Next, in the \"Strength And Weaknesses\" section, think critically about the strengths and weaknesses of the "
    "submission. Give a numbered list of at least 4 key reasons why this paper should potentially be accepted to the "
    "conference. For each reason, use sub-bullet points to provide detailed arguments and evidence from the paper to "
    "support that reason. Then, give a numbered list of at least 4 key reasons why this paper should potentially be "
    "rejected from the conference. Again, for each reason, use sub-bullet points to provide detailed arguments and "
    "evidence from the paper to support that reason. After weighing the reasons for and against, think of some "
    "questions you have about the work.\n\n"
    "Then, finish the \"Clarity, Quality, Novelty And Reproducibility\" and \"Summary Of The Review\" sections.\n\n"
    "Remember, as a reviewer your job is to rigorously evaluate the strengths and weaknesses of the work and to "
    "provide critical but constructive feedback to the authors. Be thorough, specific and detailed in your "
    "arguments and feedback. Highlight both the positives and negatives you see, and justify your points carefully "
    "with reference to the content of the paper.";

// --- rephrasing (verbatim) --------------------------------------------------
inline const std::string kRephraseSystem =
    "You are tasked with rewriting a peer review evaluation. You should follow these guidelines:\n\n"
    "1. Maintain the overall structure and organization of the review.\n"
    "2. Improve the writing and make the language more natural and native-sounding.\n"
    "3. Correct any grammatical errors or awkward phrasing.\n\n"
    "Remember to maintain the overall structure and content of the original review, but aim to enhance its "
    "readability and fluency.";

// --- meaningless elongation (verbatim) --------------------------------------
inline const std::string kElongationSummarySystem =
    "You are given a peer review of a scientific paper, please identify two key {kind} of the scientific paper from "
    "the review in a single, concise line, using two phrases separated by 'and'.";

inline const std::string kElongationPaperSummary =
    "This section provides an overview of the key contributions, methodologies, and findings presented in the paper. "
    "It summarizes the main arguments and highlights the scope and significance of the research conducted. "
    "Specifically, ";

inline const std::string kElongationStrengths =
    "In this section, I will discuss the strengths and weaknesses of the paper, focusing on its contributions to the "
    "field, methodological rigor, and areas where improvements could be made. The aim is to provide constructive "
    "feedback that can help enhance the quality of the work. This paper has several notable strengths, including "
    "{strength_summary}. However, there are some areas that could be improved, such as {weakness_summary}. "
    "Specifically, I discuss the strengths and weaknesses of the paper as following.\n\n";

inline const std::string kElongationClarity =
    "I will evaluate the clarity of the paper’s presentation, the quality of the research, the novelty of the "
    "findings, and the reproducibility of the experiments. This assessment will address whether the research is "
    "presented in a clear and coherent manner, offers new insights, and can be replicated based on the provided "
    "information. ";

inline const std::string kElongationReviewSummary =
    "This summary encapsulates the main points of the review, reflecting on the paper’s contributions, "
    "strengths, and areas for improvement. It provides a balanced overview of the paper’s impact and offers "
    "final recommendations for the authors. ";

// --- LM examiner (verbatim) -------------------------------------------------
inline const std::string kExaminerSystem =
    "You are an expert tasked with evaluating the quality of a review for a Machine Learning paper. Your goal is to "
    "assess how well the review critiques the paper and provides valuable feedback to the authors. The paper will be "
    "given after '[Paper]' and the review will be given after '[Review]'.\n\n"
    "To judge the quality of this review, consider the following criteria:\n\n"
    "1. Understanding: Does the reviewer demonstrate a clear understanding of the paper's main contributions, "
    "methodology, and results?\n\n"
    "2. Coverage: Does the review address all major aspects of the paper, including the problem statement, "
    "methodology, experiments, results, and conclusions?\n\n"
    "3. Substantiation: Does the reviewer provide specific examples or references from the paper to support their "
    "comments and criticisms?\n\n"
    "4. Constructiveness: Does the review offer helpful suggestions for improvement or identify areas where the paper "
    "could be strengthened?\n\n"
    "For each criterion, provide a detailed analysis of how well the review meets the standard.\n\n"
    "After analyzing each criterion, provide an overall assessment of the review's quality. Consider how well it "
    "serves its purpose of offering valuable feedback to the authors.\n\n"
    "Finally, assign a score to the review on a scale of 0 to 10, where 0 is the lowest quality, 5 is the average "
    "quality, and 10 is the highest quality.\n\n"
    "Present your evaluation in the following format:\n"
    "<analysis>\n"
    "[Your detailed analysis here]\n"
    "</analysis>\n"
    "<overall_assessment>\n"
    "[Your overall assessment here]\n"
    "</overall_assessment>\n"
    "<overall_score>\n"
    "[Your final quality score here]\n"
    "</overall_score>";

inline const std::string kExaminerUser = "[Paper]\n\n{paper}\n\n[Review]\n\n{review}";

// --- not fixed by any published prompt; ours ---------------------------------
inline const std::string kAbstractSystem =
    "You are given a project proposal. Write a short abstract of the proposal in a single paragraph of at most five "
    "sentences. Output only the abstract.";

/// Minimal instruction for BARTScore-style conditional likelihoods.
inline const std::string kBartSystem = "Rewrite the following text.";
inline const std::string kBartUser = "{candidate}";

/// Single-pass substitution of {name} placeholders. Substituted values are
/// never rescanned, so a value containing "{x}" is inserted literally.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string key(tmpl.substr(i + 1, close - i - 1));
        if (auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

/// Prompt set with optional on-disk overrides (--prompt-dir). An override
/// file is named <asset>.txt and replaces the built-in text wholesale.
class PromptSet {
 public:
  PromptSet() = default;

  explicit PromptSet(const std::filesystem::path& override_dir) {
    if (!std::filesystem::is_directory(override_dir))
      throw ConfigError("prompt directory not found: " + override_dir.string());
    for (const auto& e : std::filesystem::directory_iterator(override_dir)) {
      if (e.path().extension() != ".txt") continue;
      std::ifstream in(e.path());
      std::stringstream ss;
      ss << in.rdbuf();
      overrides_[e.path().stem().string()] = ss.str();
    }
  }

  const std::string& get(const std::string& asset, const std::string& builtin) const {
    auto it = overrides_.find(asset);
    return it == overrides_.end() ? builtin : it->second;
  }

  const std::string& preprocess() const { return get("preprocess_system", kPreprocessSystem); }
  const std::string& assw() const { return get("assw_system", kAsswSystem); }
  const std::string& abstract() const { return get("abstract_system", kAbstractSystem); }
  const std::string& review_generation() const { return get("review_generation_system", kReviewGenerationSystem); }

 private:
  std::map<std::string, std::string> overrides_;
};

}  // namespace gem::prompts
