/*
 * Copyright 2026 The ModAdapter Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: data generation, the three training stages,
// inference, evaluation, ablations and the gradient suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "modadapter/config.hpp"
#include "modadapter/dataset.hpp"
#include "modadapter/errors.hpp"
#include "modadapter/evaluate.hpp"
#include "modadapter/modk.hpp"
#include "modadapter/pipeline.hpp"
#include "modadapter/ppm.hpp"
#include "modadapter/random.hpp"
#include "modadapter/verify.hpp"

namespace ma = modadapter;

namespace {

struct Common {
  std::string config_path;

  ma::Config load() const {
    ma::Config c = config_path.empty() ? ma::Config{} : ma::load_config(config_path);
    ma::apply_seed_override(c);
    c.validate();
    return c;
  }
};

ma::WordList split_words(const std::string& text) {
  std::istringstream in(text);
  ma::WordList words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

std::vector<ma::Category> parse_categories(const std::string& list) {
  std::vector<ma::Category> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    auto c = ma::parse_category(item);
    if (!c) throw ma::RangeError("unknown category '" + item + "'");
    out.push_back(*c);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoull(item));
  if (out.empty()) throw ma::RangeError("no seeds given");
  return out;
}

ma::Split parse_split(const std::string& s) {
  if (s == "all") return ma::Split::all;
  if (s == "train") return ma::Split::train;
  if (s == "heldout") return ma::Split::heldout;
  throw ma::RangeError("unknown split '" + s + "'");
}

void print_metrics(const ma::Metrics& m) {
  std::cout << m.variant << " seed " << m.seed << ": CP " << m.cp << " PF " << m.pf << " CP*PF " << m.cp_pf << " over "
            << m.n_samples << " samples";
  for (const auto& [name, v] : m.per_concept) std::cout << " " << name << "=" << v;
  std::cout << "\n";
}

// Models built from one configuration. Encoders outlive the networks that
// point at them.
struct Models {
  ma::Config config;
  std::unique_ptr<ma::ToyEncoders> encoders;
  std::unique_ptr<ma::DiT> dit;

  explicit Models(ma::Config c) : config(std::move(c)) {
    encoders = std::make_unique<ma::ToyEncoders>(config.vocabulary(), config.encoder_config());
    dit = std::make_unique<ma::DiT>(config.dit_config(), *encoders);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modulation-space concept adapter for a toy diffusion transformer"};
  app.name("modadapter");
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "key = value configuration file")->check(CLI::ExistingFile);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_split = "all", gen_ppm;
  gen->add_option("--n", gen_n, "number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "dataset seed")->required();
  gen->add_option("--out", gen_out, "output MODK file")->required();
  gen->add_option("--split", gen_split, "all, train or heldout");
  gen->add_option("--ppm-dir", gen_ppm, "also write every image as P6 PPM here");

  // train-backbone
  auto* tb = app.add_subcommand("train-backbone", "Train the backbone on a dataset");
  std::string tb_data, tb_out;
  tb->add_option("--data", tb_data, "training dataset")->required()->check(CLI::ExistingFile);
  tb->add_option("--out", tb_out, "backbone checkpoint")->required();

  // pretrain-adapter
  auto* pa = app.add_subcommand("pretrain-adapter", "Pretrain the adapter against mapped captions");
  std::string pa_backbone, pa_data, pa_out, pa_variant = "full";
  pa->add_option("--backbone", pa_backbone, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  pa->add_option("--data", pa_data, "training dataset")->required()->check(CLI::ExistingFile);
  pa->add_option("--out", pa_out, "adapter checkpoint")->required();
  pa->add_option("--variant", pa_variant, "adapter variant");

  // train-adapter
  auto* ta = app.add_subcommand("train-adapter", "Train the adapter through the frozen backbone");
  std::string ta_backbone, ta_data, ta_out, ta_in, ta_variant = "full";
  ta->add_option("--backbone", ta_backbone, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  ta->add_option("--data", ta_data, "training dataset")->required()->check(CLI::ExistingFile);
  ta->add_option("--adapter", ta_in, "pretrained adapter to continue from")->check(CLI::ExistingFile);
  ta->add_option("--out", ta_out, "adapter checkpoint")->required();
  ta->add_option("--variant", ta_variant, "variant of a fresh adapter (ignored with --adapter)");

  // infer
  auto* inf = app.add_subcommand("infer", "Sample one image with concept directions");
  std::string inf_backbone, inf_adapter, inf_prompt, inf_out, inf_dump;
  std::vector<std::pair<std::string, std::string>> inf_concepts;
  double inf_scale = 1.0;
  std::uint64_t inf_seed = 0;
  int inf_steps = 0;
  inf->add_option("--backbone", inf_backbone, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--adapter", inf_adapter, "adapter checkpoint")->check(CLI::ExistingFile);
  inf->add_option("--prompt", inf_prompt, "prompt text")->required();
  inf->add_option("--concept", inf_concepts, "concept image (PPM) and the prompt word it binds to");
  inf->add_option("--scale", inf_scale, "direction scale s");
  inf->add_option("--seed", inf_seed, "sampling seed");
  inf->add_option("--steps", inf_steps, "sampling steps (default from config)");
  inf->add_option("--out", inf_out, "output PPM")->required();
  inf->add_option("--dump-directions", inf_dump, "write the directions to a MODK file");

  // eval
  auto* ev = app.add_subcommand("eval", "Score a trained adapter on the held-out benchmark");
  std::string ev_backbone, ev_adapter, ev_out, ev_concepts = "tone";
  std::uint64_t ev_seed = 1;
  std::size_t ev_n = 0;
  ev->add_option("--backbone", ev_backbone, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--adapter", ev_adapter, "adapter checkpoint; without it concepts get no directions")
      ->check(CLI::ExistingFile);
  ev->add_option("--concepts", ev_concepts, "personalized categories, comma separated");
  ev->add_option("--seed", ev_seed, "benchmark seed");
  ev->add_option("--n", ev_n, "benchmark size (default from config)");
  ev->add_option("--out", ev_out, "metrics CSV");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and score one adapter variant");
  std::string ab_variant, ab_backbone, ab_data, ab_out, ab_seeds = "1,2,3", ab_concepts = "tone,texture";
  ab->add_option("--variant", ab_variant, "full, no_pretrain, no_vl_attn, no_moe or linear_gating")->required();
  ab->add_option("--backbone", ab_backbone, "backbone checkpoint")->required()->check(CLI::ExistingFile);
  ab->add_option("--data", ab_data, "training dataset")->required()->check(CLI::ExistingFile);
  ab->add_option("--seeds", ab_seeds, "comma separated seeds");
  ab->add_option("--concepts", ab_concepts, "personalized categories of the benchmark");
  ab->add_option("--out", ab_out, "metrics CSV")->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::string gc_seeds = "1,2,3";
  gc->add_option("--seeds", gc_seeds, "comma separated seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*gen) {
      const ma::Dataset ds = ma::gen_dataset(gen_n, gen_seed, gen_out, parse_split(gen_split));
      if (!gen_ppm.empty()) {
        std::filesystem::create_directories(gen_ppm);
        for (std::size_t i = 0; i < ds.samples.size(); ++i)
          ma::write_ppm(std::filesystem::path(gen_ppm) / ("sample_" + std::to_string(i) + ".ppm"), ds.samples[i].image);
      }
      std::cout << "wrote " << ds.samples.size() << " samples to " << gen_out << "\n";
      return 0;
    }

    if (*gc) {
      const auto results = ma::gradient_suite(parse_seeds(gc_seeds));
      std::map<std::string, std::pair<double, double>> worst;
      bool ok = true;
      for (const auto& r : results) {
        auto& w = worst[r.name];
        w.first = std::max(w.first, r.error);
        w.second = r.tolerance;
        ok = ok && r.pass();
      }
      for (const auto& [name, w] : worst) {
        std::cout << (w.first < w.second ? "ok   " : "FAIL ") << name << " max rel error " << w.first << " (tol "
                  << w.second << ")\n";
      }
      return ok ? 0 : 1;
    }

    Models m(common.load());
    const ma::Config& cfg = m.config;

    if (*tb) {
      const ma::Dataset ds = ma::read_dataset(tb_data);
      ma::train_backbone(*m.dit, ds, cfg, &std::cerr);
      ma::save_backbone(tb_out, *m.dit);
      std::cout << "backbone " << std::hex << m.dit->hash() << std::dec << " -> " << tb_out << "\n";
      return 0;
    }

    if (*pa) {
      const auto variant = ma::parse_variant(pa_variant);
      ma::load_backbone(pa_backbone, *m.dit);
      const ma::Dataset ds = ma::read_dataset(pa_data);
      auto adapter = ma::make_adapter(cfg, *m.encoders, variant, cfg.seed);
      ma::pretrain_adapter(*m.dit, *adapter, ds, cfg, cfg.seed, &std::cerr);
      ma::save_adapter(pa_out, *adapter);
      std::cout << "adapter -> " << pa_out << "\n";
      return 0;
    }

    if (*ta) {
      ma::load_backbone(ta_backbone, *m.dit);
      const ma::Dataset ds = ma::read_dataset(ta_data);
      auto adapter = ta_in.empty() ? ma::make_adapter(cfg, *m.encoders, ma::parse_variant(ta_variant), cfg.seed)
                                   : ma::load_adapter(ta_in, cfg, *m.encoders);
      const std::uint64_t before = m.dit->hash();
      ma::train_adapter(*m.dit, *adapter, ds, cfg, cfg.seed, &std::cerr);
      if (m.dit->hash() != before) throw ma::StageError("backbone weights changed during adapter training");
      ma::save_adapter(ta_out, *adapter);
      std::cout << "adapter -> " << ta_out << "\n";
      return 0;
    }

    if (*inf) {
      ma::load_backbone(inf_backbone, *m.dit);
      const ma::WordList prompt = split_words(inf_prompt);
      m.dit->check_prompt(prompt);
      std::unique_ptr<ma::ModAdapter> adapter;
      if (!inf_concepts.empty()) {
        if (inf_adapter.empty()) throw ma::RangeError("--concept needs --adapter");
        adapter = ma::load_adapter(inf_adapter, cfg, *m.encoders);
      }
      std::vector<ma::ConceptDirections> concepts;
      ma::ModkFile dump;
      dump.add_string("kind", "directions");
      for (std::size_t i = 0; i < inf_concepts.size(); ++i) {
        const auto& [image_path, word] = inf_concepts[i];
        const auto it = std::find(prompt.begin(), prompt.end(), word);
        if (it == prompt.end()) throw ma::RangeError("concept word '" + word + "' does not occur in the prompt");
        const auto token = static_cast<std::size_t>(it - prompt.begin());
        const ma::Matrix d = adapter->predict_directions(ma::read_ppm(image_path), word);
        concepts.push_back(ma::ConceptDirections{token, d});
        const std::string p = "directions/" + std::to_string(i) + "/";
        dump.add_string(p + "word", word);
        const std::int64_t tok[1] = {static_cast<std::int64_t>(token)};
        dump.add_i64(p + "token", {1}, tok);
        dump.add_f64(p + "delta", ma::Tensor::from_matrix(d));
      }
      const int steps = inf_steps > 0 ? inf_steps : cfg.sample_steps;
      const ma::Image img = m.dit->sample(prompt, concepts, inf_scale, steps, inf_seed);
      ma::write_ppm(inf_out, img);
      if (!inf_dump.empty()) dump.write(inf_dump);
      std::cout << "wrote " << inf_out << "\n";
      return 0;
    }

    if (*ev) {
      ma::load_backbone(ev_backbone, *m.dit);
      const auto cats = parse_categories(ev_concepts);
      const auto bench = ma::make_bench(ev_n ? ev_n : cfg.eval_samples, ev_seed, cats);
      std::unique_ptr<ma::ModAdapter> adapter;
      ma::DirectionFn dirs;
      std::string name = "baseline";
      if (!ev_adapter.empty()) {
        adapter = ma::load_adapter(ev_adapter, cfg, *m.encoders);
        dirs = ma::adapter_directions(*adapter);
        name = std::string(ma::variant_name(adapter->config().variant));
      }
      const ma::Metrics metrics = ma::evaluate(*m.dit, bench, dirs, cfg.direction_scale, cfg.sample_steps, name, ev_seed);
      print_metrics(metrics);
      if (!ev_out.empty()) ma::write_metrics_csv(ev_out, std::span(&metrics, 1));
      return 0;
    }

    if (*ab) {
      // validate everything before any work so a bad name leaves no output
      const auto variant = ma::parse_variant(ab_variant);
      const auto seeds = parse_seeds(ab_seeds);
      const auto cats = parse_categories(ab_concepts);
      ma::load_backbone(ab_backbone, *m.dit);
      const ma::Dataset ds = ma::read_dataset(ab_data);
      std::vector<ma::Metrics> rows;
      for (std::uint64_t seed : seeds) {
        const auto bench = ma::make_bench(cfg.eval_samples, ma::derive_seed(seed, 0xe1), cats);
        const ma::AblationRun run = ma::run_ablation(variant, cfg, *m.dit, ds, bench, seed, &std::cerr);
        print_metrics(run.metrics);
        rows.push_back(run.metrics);
      }
      ma::write_metrics_csv(ab_out, rows);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
