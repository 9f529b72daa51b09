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

#include "modadapter/evaluate.hpp"

#include <array>
#include <charconv>
#include <sstream>

#include "modadapter/errors.hpp"
#include "modadapter/modk.hpp"
#include "modadapter/probe.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

namespace {

SceneSpec heldout_spec(std::uint64_t seed, const std::function<bool(const SceneSpec&)>& accept) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    SceneSpec s = random_spec(derive_seed(seed, attempt));
    if (is_heldout_combo(s) && accept(s)) return s;
  }
}

std::string format_scalar(Scalar v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

template <typename T>
T parse_field(std::string_view text, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw FormatError("metrics csv line " + std::to_string(line) + ": bad field '" + std::string(text) + "'");
  return v;
}

}  // namespace

std::vector<EvalCase> make_bench(std::size_t n, std::uint64_t seed, std::span<const Category> personalized) {
  for (Category c : personalized) {
    if (c == Category::shape) throw RangeError("the shape category cannot be personalized in the benchmark");
  }
  std::vector<EvalCase> bench;
  bench.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t sub = derive_seed(seed, i);
    EvalCase ec;
    ec.target = heldout_spec(derive_seed(sub, 1), [](const SceneSpec&) { return true; });
    const Caption cap = caption(ec.target, personalized);
    ec.prompt = cap.words;
    for (std::size_t k = 0; k < personalized.size(); ++k) {
      const Category c = personalized[k];
      const SceneSpec shown = heldout_spec(derive_seed(sub, 10 + k), [&](const SceneSpec& s) {
        return s.value(c) == ec.target.value(c) && !(s == ec.target);
      });
      const ConceptAnnotation& ann = cap.concept_for(c);
      ec.concepts.push_back(
          BenchConcept{c, ann.concept_word, ann.token_index, ec.target.value(c), render_scene(shown, derive_seed(sub, 20 + k))});
    }
    for (Category c : kCategories) {
      if (std::find(personalized.begin(), personalized.end(), c) == personalized.end()) ec.fidelity.push_back(c);
    }
    ec.sample_seed = derive_seed(sub, 2);
    bench.push_back(std::move(ec));
  }
  return bench;
}

DirectionFn adapter_directions(ModAdapter& adapter) {
  return [&adapter](const BenchConcept& c) { return adapter.predict_directions(c.image, c.word); };
}

DirectionFn attribute_directions(const ToyEncoders& encoders, Index blocks) {
  return [&encoders, blocks](const BenchConcept& c) {
    const std::string attr(category_values(c.category)[static_cast<std::size_t>(c.value)]);
    const std::string words[1] = {attr};
    return Matrix(encoders.map_prompt(words).replicate(blocks, 1));
  };
}

std::vector<Image> generate_bench(DiT& dit, std::span<const EvalCase> bench, const DirectionFn& directions, Scalar s,
                                  int steps, std::size_t batch) {
  if (batch == 0) throw RangeError("batch must be >= 1");
  std::vector<Image> out;
  out.reserve(bench.size());
  for (std::size_t b0 = 0; b0 < bench.size(); b0 += batch) {
    const std::size_t b1 = std::min(bench.size(), b0 + batch);
    std::vector<WordList> prompts;
    std::vector<std::vector<ConceptDirections>> concepts;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = b0; i < b1; ++i) {
      prompts.push_back(bench[i].prompt);
      seeds.push_back(bench[i].sample_seed);
      std::vector<ConceptDirections> cd;
      if (directions) {
        for (const BenchConcept& c : bench[i].concepts) cd.push_back(ConceptDirections{c.token_index, directions(c)});
      }
      concepts.push_back(std::move(cd));
    }
    for (Image& img : dit.sample_batch(prompts, concepts, s, steps, seeds)) out.push_back(std::move(img));
  }
  return out;
}

Metrics score_images(std::span<const EvalCase> bench, std::span<const Image> images, std::string variant,
                     std::uint64_t seed) {
  if (bench.size() != images.size()) throw ShapeError("score_images: one image per case");
  std::size_t cp_hit = 0, cp_all = 0, pf_hit = 0, pf_all = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per;
  for (std::size_t i = 0; i < bench.size(); ++i) {
    for (const BenchConcept& c : bench[i].concepts) {
      const bool ok = probe_value(images[i], c.category) == c.value;
      cp_hit += ok;
      ++cp_all;
      auto& p = per[std::string(category_name(c.category))];
      p.first += ok;
      ++p.second;
    }
    for (Category c : bench[i].fidelity) {
      pf_hit += probe_value(images[i], c) == bench[i].target.value(c);
      ++pf_all;
    }
  }
  Metrics m;
  m.variant = std::move(variant);
  m.seed = seed;
  m.cp = cp_all ? static_cast<Scalar>(cp_hit) / static_cast<Scalar>(cp_all) : 0.0;
  m.pf = pf_all ? static_cast<Scalar>(pf_hit) / static_cast<Scalar>(pf_all) : 0.0;
  m.cp_pf = m.cp * m.pf;
  m.n_samples = bench.size();
  for (const auto& [name, hits] : per)
    m.per_concept[name] = static_cast<Scalar>(hits.first) / static_cast<Scalar>(hits.second);
  return m;
}

Metrics evaluate(DiT& dit, std::span<const EvalCase> bench, const DirectionFn& directions, Scalar s, int steps,
                 std::string variant, std::uint64_t seed) {
  const std::vector<Image> images = generate_bench(dit, bench, directions, s, steps);
  return score_images(bench, images, std::move(variant), seed);
}

std::string metrics_csv(std::span<const Metrics> rows) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const Metrics& m : rows) {
    if (m.variant.find_first_of(",\n\"") != std::string::npos) throw FormatError("variant name not CSV-safe");
    out += m.variant + "," + std::to_string(m.seed) + "," + format_scalar(m.cp) + "," + format_scalar(m.pf) + "," +
           format_scalar(m.cp_pf) + "," + std::to_string(m.n_samples) + "\n";
  }
  return out;
}

std::vector<Metrics> parse_metrics_csv(std::string_view text) {
  std::vector<Metrics> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line_no == 1) {
      if (line != kMetricsCsvHeader) throw FormatError("metrics csv: unexpected header");
      continue;
    }
    std::vector<std::string_view> f;
    for (std::size_t pos = 0;;) {
      const auto comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 6) throw FormatError("metrics csv line " + std::to_string(line_no) + ": expected 6 fields");
    Metrics m;
    m.variant = std::string(f[0]);
    m.seed = parse_field<std::uint64_t>(f[1], line_no);
    m.cp = parse_field<Scalar>(f[2], line_no);
    m.pf = parse_field<Scalar>(f[3], line_no);
    m.cp_pf = parse_field<Scalar>(f[4], line_no);
    m.n_samples = parse_field<std::size_t>(f[5], line_no);
    rows.push_back(std::move(m));
  }
  if (line_no == 0) throw FormatError("metrics csv: empty");
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const Metrics> rows) {
  const std::string text = metrics_csv(rows);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<Scalar> expert_shares(ModAdapter& adapter, std::span<const Image> images) {
  if (images.empty()) throw ShapeError("expert_shares: no images");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(adapter.config().experts), 0);
  std::uint64_t total = 0;
  for (const std::string& w : concept_words()) {
    for (std::size_t b0 = 0; b0 < images.size(); b0 += 64) {
      std::vector<ConceptInput> inputs;
      for (std::size_t i = b0; i < std::min(images.size(), b0 + 64); ++i)
        inputs.push_back(adapter.concept_input(images[i], w));
      Tape tape(false);
      for (Index e : adapter.forward(tape, inputs).experts) {
        ++counts[static_cast<std::size_t>(e)];
        ++total;
      }
    }
  }
  std::vector<Scalar> shares;
  for (auto c : counts) shares.push_back(static_cast<Scalar>(c) / static_cast<Scalar>(total));
  return shares;
}

}  // namespace modadapter
