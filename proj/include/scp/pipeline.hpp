#pragma once

// Glue between a RunConfig and the training and evaluation modules: data
// loading, the phase chain with its checkpoint files, and the test-split
// evaluation used by the command-line tool and the acceptance run.

#include <array>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "scp/checkpoint.hpp"
#include "scp/config.hpp"
#include "scp/eval.hpp"
#include "scp/training.hpp"

namespace scp {

inline constexpr const char* kLmCheckpoint = "lm.scpm";
inline constexpr const char* kClassifierCheckpoint = "classifier.scpm";
inline constexpr const char* kFinalCheckpoint = "model.scpm";
inline constexpr const char* kAbortCheckpoint = "abort.scpm";
std::string joint_checkpoint_name(std::size_t epoch);  // joint-epoch01.scpm, ...
std::string phase_log_name(const std::string& phase);  // lm.jsonl, classifier.jsonl, joint.jsonl

struct RunData {
  std::array<std::array<Corpus, 3>, 2> corpora;  // [style][split]; missing splits are empty
  Dataset data;
};

// Number of vector components on the first non-blank line of a GloVe file.
std::size_t embedding_file_dim(const std::filesystem::path& path);

// Train splits are required; valid and test are optional. The vocabulary is
// built from the training splits only.
RunData load_run_data(const RunConfig& rc, std::ostream* warn = nullptr);

// rc.model with vocab_size and noun_dim taken from the data.
ModelConfig complete_model_config(const RunConfig& rc, const Dataset& data);

enum class Phase { Lm, Classifier, Joint, All };
Phase parse_phase(const std::string& s);

// Runs `phase` (or lm -> classifier -> joint for All) writing checkpoints and
// JSON-lines logs into rc.out_dir. Later phases start from the checkpoint of
// the previous one. A non-finite loss or gradient dumps abort.scpm and
// rethrows. Returns the final model.
Model run_phases(const RunConfig& rc, const RunData& d, Phase phase,
                 std::ostream* progress = nullptr);

// One output line per input line. Blank inputs stay blank; inputs longer
// than the encoder limit come back blank and get a message in `warnings`
// naming the 1-based line.
std::vector<std::string> transfer_lines(Model& model, const Vocabulary& vocab,
                                        const std::vector<std::string>& lines, Style target,
                                        std::vector<std::string>* warnings = nullptr);

struct TransferEval {
  std::vector<Tokens> originals, outputs;
  std::vector<Style> targets;
  double accuracy = 0.0;
  double bleu = 0.0;
  double noun_preservation = 0.0;
  PosMetric pos;
};

// Transfers both test splits (valid when test is empty) to the opposite
// style and scores them against the originals.
TransferEval evaluate_test_transfer(Model& model, const RunData& d);

}  // namespace scp
