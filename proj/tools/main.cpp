// tokprep: build toy models, extract sentence embeddings with or without
// token prepending, and run the evaluation suite.

#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "commands.hpp"

namespace {

using namespace tokprep::cli;

void add_model_args(CLI::App* app, ModelArgs& m, bool with_tp = true) {
  app->add_option("--model", m.model, "weight file from init-model")->required();
  app->add_option("--vocab", m.vocab, "BPE vocabulary file")->required();
  if (with_tp) {
    app->add_option("--tp", m.tp, "TP config JSON, or 'off' for plain extraction")
        ->capture_default_str();
  }
  app->add_option("--template", m.template_name,
                  "builtin template name or template file (default: the TP config's)");
  app->add_option("--threads", m.threads, "worker threads (default: TP_THREADS or 1)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Token prepending sentence embeddings on a toy decoder"};
  app.set_version_flag("--version", std::string(tokprep::kVersion));
  app.require_subcommand(1);

  InitModelArgs init;
  auto* c_init = app.add_subcommand("init-model", "create seeded weights (and optionally a BPE vocab)");
  c_init->add_option("--config", init.config, "model config JSON")->required();
  c_init->add_option("--out", init.out, "weight file to write")->required();
  c_init->add_option("--corpus", init.corpus, "one sentence per line; trains the vocab");
  c_init->add_option("--vocab-out", init.vocab_out, "vocabulary file to write");

  EmbedArgs embed;
  auto* c_embed = app.add_subcommand("embed", "embed one sentence per line into a binary dump");
  add_model_args(c_embed, embed.m);
  c_embed->add_option("--in", embed.in, "sentences file")->required();
  c_embed->add_option("--out", embed.out, "embedding dump to write")->required();

  EvalStsArgs sts;
  auto* c_sts = app.add_subcommand("eval-sts", "Spearman x 100 on every STS dataset of a directory");
  add_model_args(c_sts, sts.m);
  c_sts->add_option("--data", sts.data, "directory of <name>.tsv files")->required();
  c_sts->add_option("--report", sts.report, "JSON report to write")->required();
  c_sts->add_flag("--compare", sts.compare, "also score plain extraction at the same exit layer");

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "STS average as one layer option varies");
  add_model_args(c_sweep, sw.m);
  c_sweep->add_option("--data", sw.data, "directory of <name>.tsv files")->required();
  c_sweep->add_option("--axis", sw.axis, "end_layer | exit_layer | start_layer")
      ->capture_default_str();
  c_sweep->add_option("--from", sw.from, "first value (default 1)");
  c_sweep->add_option("--to", sw.to, "last value (default: model depth)");
  c_sweep->add_option("--out", sw.out, "curve JSON to write")->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "median wall time per pass against plain extraction");
  add_model_args(c_bench, bench.m, false);
  c_bench->add_option("--tp", bench.tp_arms, "TP config(s) to time; repeatable")->required();
  c_bench->add_option("--in", bench.in, "sentences file (at least 100 lines)")->required();
  c_bench->add_option("--report", bench.report, "JSON report to write")->required();
  c_bench->add_option("--warmup", bench.warmup, "untimed passes")->capture_default_str();
  c_bench->add_option("--reps", bench.reps, "timed passes")->capture_default_str()
      ->check(CLI::PositiveNumber);

  AnalyzeDepArgs dep;
  auto* c_dep = app.add_subcommand("analyze-dep", "last-token dependency with and without TP");
  add_model_args(c_dep, dep.m);
  c_dep->add_option("--in", dep.in, "sentences file")->required();
  c_dep->add_option("--report", dep.report, "JSON report to write")->required();

  EvalTransferArgs tr;
  auto* c_tr = app.add_subcommand("eval-transfer", "logistic-regression probe on frozen embeddings");
  add_model_args(c_tr, tr.m);
  c_tr->add_option("--train", tr.train, "labeled TSV: label<TAB>text")->required();
  c_tr->add_option("--test", tr.test, "labeled TSV: label<TAB>text")->required();
  c_tr->add_option("--report", tr.report, "JSON report to write")->required();
  c_tr->add_option("--l2", tr.opt.l2)->capture_default_str();
  c_tr->add_option("--epochs", tr.opt.epochs)->capture_default_str();
  c_tr->add_option("--lr", tr.opt.lr)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_init) return cmd_init_model(init);
    if (*c_embed) return cmd_embed(embed);
    if (*c_sts) return cmd_eval_sts(sts);
    if (*c_sweep) return cmd_sweep(sw);
    if (*c_bench) return cmd_bench(bench);
    if (*c_dep) return cmd_analyze_dep(dep);
    if (*c_tr) return cmd_eval_transfer(tr);
  } catch (const std::exception& e) {
    std::cerr << "tokprep: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
