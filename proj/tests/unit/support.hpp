#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "gem/gem.hpp"

namespace testing_support {

inline std::filesystem::path data_dir() { return GEM_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gem-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Backend whose answers come from test lambdas.
class ScriptedBackend : public gem::lm::Backend {
 public:
  std::function<std::string(const gem::lm::PromptBundle&)> on_complete;
  std::function<std::vector<gem::lm::TokenScore>(const gem::lm::PromptBundle&)> on_score;
  std::function<std::vector<double>(const std::string&)> on_embed;
  std::atomic<int> calls{0};

  std::string name() const override { return "scripted"; }
  std::string complete(const gem::lm::PromptBundle& b) override {
    ++calls;
    if (!on_complete) return gem::lm::Backend::complete(b);
    return on_complete(b);
  }
  std::vector<gem::lm::TokenScore> score(const gem::lm::PromptBundle& b) override {
    ++calls;
    if (!on_score) return gem::lm::Backend::score(b);
    return on_score(b);
  }
  std::vector<double> embed(const std::string& text, const std::string& model) override {
    ++calls;
    if (!on_embed) return gem::lm::Backend::embed(text, model);
    return on_embed(text);
  }
};

inline gem::Response response(const std::string& task, const std::string& author, const std::string& text,
                              std::optional<std::string> pre = std::nullopt) {
  gem::Response r;
  r.task_id = task;
  r.author_id = author;
  r.raw_text = text;
  r.preprocessed_text = std::move(pre);
  return r;
}

// The four-section toy review used for the perturbation examples.
inline const std::string kToyReview =
    "Summary Of The Paper:\n\n"
    "This is the first sentence. This is the second sentence. This is the third sentence.\n\n"
    "Strengths And Weaknesses:\n\n"
    "This is the first sentence. This is the second sentence. This is the third sentence. This is the fourth "
    "sentence.\n\n"
    "Clarity, Quality, Novelty And Reproducibility:\n\n"
    "This is the first sentence.\n\n"
    "Summary Of The Review:\n\n"
    "This is the first sentence. This is the second sentence.\n";

inline const std::string kToyAfterDeletion =
    "Summary Of The Paper:\n\n"
    "This is the first sentence. This is the third sentence.\n\n"
    "Strengths And Weaknesses:\n\n"
    "This is the first sentence. This is the third sentence.\n\n"
    "Clarity, Quality, Novelty And Reproducibility:\n\n"
    "This is the first sentence.\n\n"
    "Summary Of The Review:\n\n"
    "This is the first sentence.\n";

/// Expected elongated toy review for the given summaries.
inline std::string toy_elongated(const std::string& s, const std::string& w) {
  return "Summary Of The Paper:\n\n"
         "This section provides an overview of the key contributions, methodologies, and findings presented in the "
         "paper. It summarizes the main arguments and highlights the scope and significance of the research "
         "conducted. Specifically, This is the first sentence. This is the second sentence. This is the third "
         "sentence.\n\n"
         "Strengths And Weaknesses:\n\n"
         "In this section, I will discuss the strengths and weaknesses of the paper, focusing on its contributions to "
         "the field, methodological rigor, and areas where improvements could be made. The aim is to provide "
         "constructive feedback that can help enhance the quality of the work. This paper has several notable "
         "strengths, including " +
         s + ". However, there are some areas that could be improved, such as " + w +
         ". Specifically, I discuss the strengths and weaknesses of the paper as following.\n\n"
         "This is the first sentence. This is the second sentence. This is the third sentence. This is the fourth "
         "sentence.\n\n"
         "Clarity, Quality, Novelty And Reproducibility:\n\n"
         "I will evaluate the clarity of the paper\xE2\x80\x99s presentation, the quality of the research, the "
         "novelty of the findings, and the reproducibility of the experiments. This assessment will address whether "
         "the research is presented in a clear and coherent manner, offers new insights, and can be replicated based "
         "on the provided information. This is the first sentence.\n\n"
         "Summary Of The Review:\n\n"
         "This summary encapsulates the main points of the review, reflecting on the paper\xE2\x80\x99s "
         "contributions, strengths, and areas for improvement. It provides a balanced overview of the paper\xE2\x80"
         "\x99s impact and offers final recommendations for the authors. This is the first sentence. This is the "
         "second sentence.\n";
}

}  // namespace testing_support
