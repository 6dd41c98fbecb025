// Command-line front end: generate-data, train, eval, ablate, probe-attention, report.
// Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trimodal/ablate.hpp"
#include "trimodal/checkpoint.hpp"
#include "trimodal/config.hpp"
#include "trimodal/dataset_io.hpp"
#include "trimodal/report.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/train.hpp"

namespace fs = std::filesystem;
using namespace trimodal;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : Error {
  using Error::Error;
};

// Shared --config and free-form "--key value" overrides.
struct ConfigOptions {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void add(CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config file")->check(CLI::ExistingFile);
    sub->allow_extras();
  }

  // Collects the extras left over by CLI11 as key/value pairs.
  void collect(CLI::App* sub) {
    const auto rest = sub->remaining();
    for (std::size_t i = 0; i < rest.size(); ++i) {
      const std::string& a = rest[i];
      if (a.rfind("--", 0) != 0 || a.size() < 3) throw UsageError("unexpected argument '" + a + "'");
      std::string key = a.substr(2), value;
      if (const auto eq = key.find('='); eq != std::string::npos) {
        value = key.substr(eq + 1);
        key = key.substr(0, eq);
      } else {
        if (i + 1 >= rest.size()) throw UsageError("option --" + key + " needs a value");
        value = rest[++i];
      }
      overrides.emplace_back(key, value);
    }
  }

  RunConfig resolve() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    for (const auto& [k, v] : overrides) apply_override(c, k, v);
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::vector<TriModalSample>& split_of(const Dataset& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

void check_compatible(const Checkpoint& c, const Dataset& d) {
  const ModelConfig expected = c.train.model_for(d.config);
  const auto& e = c.model.config.encoder;
  if (e.motion_features != expected.encoder.motion_features || e.video_features != expected.encoder.video_features ||
      e.vocab_size != expected.encoder.vocab_size || e.max_motion_len < expected.encoder.max_motion_len ||
      e.max_text_len < expected.encoder.max_text_len || e.frames_per_video != expected.encoder.frames_per_video)
    throw UsageError("checkpoint input shapes do not match the dataset");
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("invalid value '" + item + "' in --values");
    }
  }
  if (out.empty()) throw UsageError("--values is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tri-modal text/video/motion contrastive alignment"};
  app.require_subcommand(1);

  // generate-data
  ConfigOptions gen_opts;
  std::string gen_out;
  std::string gen_seed;
  auto* gen = app.add_subcommand("generate-data", "Generate a synthetic tri-modal dataset");
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed")->required();
  gen_opts.add(gen);

  // train
  ConfigOptions train_opts;
  std::string train_data, train_out, train_seed;
  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  tr->add_option("--data", train_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", train_out, "Output run directory")->required();
  tr->add_option("--seed", train_seed, "Training seed")->required();
  train_opts.add(tr);

  // eval
  ConfigOptions eval_opts;
  std::string eval_ckpt, eval_data, eval_split = "test", eval_protocol = "every", eval_csv;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint under the retrieval protocols");
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", eval_split, "train, val or test");
  ev->add_option("--protocol", eval_protocol,
                 "all, all_with_threshold, dissimilar_subset, small_batches or every");
  ev->add_option("--out-csv", eval_csv, "Write the report as CSV");
  eval_opts.add(ev);

  // ablate
  ConfigOptions abl_opts;
  std::string abl_data, abl_dim, abl_values, abl_csv;
  auto* ab = app.add_subcommand("ablate", "Sweep one hyperparameter and tabulate retrieval");
  ab->add_option("--data", abl_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  ab->add_option("--dimension", abl_dim, "epsilon, lambda_recon, batch_size or latent_dim")->required();
  ab->add_option("--values", abl_values, "Comma-separated values")->required();
  ab->add_option("--out-csv", abl_csv, "Write the table as CSV");
  abl_opts.add(ab);

  // probe-attention
  std::string probe_ckpt, probe_data, probe_split = "test";
  auto* pr = app.add_subcommand("probe-attention", "Average fusion weights per modality");
  pr->add_option("--checkpoint", probe_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--data", probe_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--split", probe_split, "train, val or test");

  // report
  std::vector<std::string> report_inputs;
  auto* rep = app.add_subcommand("report", "Render protocol report CSV files as text tables");
  rep->add_option("inputs", report_inputs, "Report CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      gen_opts.collect(gen);
      gen_opts.overrides.insert(gen_opts.overrides.begin(), {"generator.seed", gen_seed});
      const RunConfig c = gen_opts.resolve();
      const Dataset d = generate(c.generator);
      write_dataset(d, gen_out);
      std::printf("wrote %zu/%zu/%zu train/val/test samples to %s\n", d.train.size(), d.val.size(), d.test.size(),
                  gen_out.c_str());
    } else if (*tr) {
      train_opts.collect(tr);
      train_opts.overrides.insert(train_opts.overrides.begin(), {"train.seed", train_seed});
      const RunConfig c = train_opts.resolve();
      c.train.validate();
      const Dataset d = read_dataset(train_data);
      const fs::path out(train_out);
      fs::create_directories(out);
      write_text(out / "config.json", run_config_to_json(c).dump(2) + "\n");
      TrainResult r = train(d, c.train, {}, [](const EpochLog& e) {
        std::printf("epoch %zu lr %.3g l_total %.6f l_align %.6f l_recon %.6f val_t2m_R@1 %.2f\n", e.epoch, e.lr,
                    e.loss.l_total, e.loss.l_align, e.loss.l_recon, e.val_t2m_r1);
        std::fflush(stdout);
      });
      write_text(out / "metrics.csv", epoch_csv(r.log));
      Checkpoint final_ckpt{r.model, c.train, d.config, c.train.epochs};
      save_checkpoint(final_ckpt, out / "final");
      if (r.best) {
        Checkpoint best{*r.best, c.train, d.config, r.best_epoch + 1};
        save_checkpoint(best, out / "best");
      }
      std::printf("saved checkpoints under %s\n", out.c_str());
    } else if (*ev) {
      eval_opts.collect(ev);
      const RunConfig c = eval_opts.resolve();
      c.protocol.validate();
      Checkpoint ck = load_checkpoint(eval_ckpt);
      const Dataset d = read_dataset(eval_data);
      check_compatible(ck, d);
      const auto samples = pointers(split_of(d, eval_split));
      std::vector<Protocol> protocols;
      const bool every = eval_protocol == "every";
      if (every)
        protocols = {Protocol::kAll, Protocol::kAllWithThreshold, Protocol::kDissimilarSubset, Protocol::kSmallBatches};
      else
        protocols = {parse_protocol(eval_protocol)};
      const std::pair<Modality, Modality> directions[] = {{Modality::kText, Modality::kMotion},
                                                          {Modality::kMotion, Modality::kText},
                                                          {Modality::kVideo, Modality::kMotion},
                                                          {Modality::kMotion, Modality::kVideo}};
      std::vector<RetrievalReport> reports;
      for (const auto& [q, g] : directions) {
        const RetrievalSet set = retrieval_set(ck.model, samples, q, g);
        for (Protocol p : protocols) {
          try {
            reports.push_back(run_protocol(p, set, direction_name(q, g), c.protocol));
          } catch (const ConfigError& e) {
            if (!every) throw;
            std::fprintf(stderr, "skipped %s %s: %s\n", std::string(protocol_name(p)).c_str(),
                         direction_name(q, g).c_str(), e.what());
          }
        }
      }
      std::fputs(report_table(reports).c_str(), stdout);
      if (!eval_csv.empty()) write_text(eval_csv, report_csv(reports));
    } else if (*ab) {
      abl_opts.collect(ab);
      const RunConfig c = abl_opts.resolve();
      const Dataset d = read_dataset(abl_data);
      const AblationResult a = ablate(parse_ablation_dimension(abl_dim), parse_values(abl_values), c.train, d);
      std::fputs(ablation_table(a).c_str(), stdout);
      if (!abl_csv.empty()) write_text(abl_csv, ablation_csv(a));
    } else if (*pr) {
      Checkpoint ck = load_checkpoint(probe_ckpt);
      const Dataset d = read_dataset(probe_data);
      check_compatible(ck, d);
      const auto w = modality_weight_probe(ck.model, pointers(split_of(d, probe_split)), ck.train.modality_mode);
      std::printf("text %.6f\nvideo %.6f\nmotion %.6f\n", w[0], w[1], w[2]);
    } else if (*rep) {
      for (const auto& path : report_inputs) {
        std::printf("%s\n", path.c_str());
        std::fputs(report_table(parse_report_csv(read_text(path))).c_str(), stdout);
      }
    }
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return 0;
}
