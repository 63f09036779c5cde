#include <CLI11.hpp>

#include "seqdiff/cli/commands.hpp"

namespace {

using seqdiff::cli::Options;

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "Run configuration (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--seed", o.seed, "Seed for synthesis, training and fold assignment");
  cmd->add_flag("--quiet", o.quiet, "Suppress per-epoch progress");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential dermoscopy classification: synthesize, train, evaluate, visualize"};
  app.require_subcommand(1);
  Options o;

  auto* synth = app.add_subcommand("synth", "Write a synthetic lesion-evolution dataset (PNG frames + manifest)");
  add_common(synth, o, false);

  auto* train = app.add_subcommand("train", "Cross-validate a model; writes per-fold artifacts and metrics.json");
  add_common(train, o, true);

  auto* eval = app.add_subcommand("eval", "Score a manifest with a checkpoint; writes scores.csv and metrics.json");
  add_common(eval, o, false);
  eval->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  eval->add_option("--manifest", o.manifest, "JSON-lines manifest")->required();

  auto* viz = app.add_subcommand("visualize", "Feature-difference heat maps for one patient");
  add_common(viz, o, false);
  viz->add_option("--checkpoint", o.checkpoint, "Two-stream checkpoint")->required();
  viz->add_option("--manifest", o.manifest, "JSON-lines manifest")->required();
  viz->add_option("--patient", o.patient, "Patient id")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : seqdiff::cli::kUsage;
  }

  if (synth->parsed()) return seqdiff::cli::cmd_synth(o);
  if (train->parsed()) return seqdiff::cli::cmd_train(o);
  if (eval->parsed()) return seqdiff::cli::cmd_eval(o);
  return seqdiff::cli::cmd_visualize(o);
}
