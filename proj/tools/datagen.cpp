//
// Project smipred - Copyright 2026 smipred contributors
// SPDX-License-Identifier: Apache-2.0
//
// Generates the bundled stand-in datasets. The public MoleculeNet files are
// not redistributed here; these synthetic sets mirror their record counts,
// label scales and task structure, with labels driven by hydrophilic vs
// hydrophobic composition plus noise so that desk-scale models can learn
// real structure and the interpretability ground truth is well defined.
// Generation is fully deterministic for a given seed.
#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include "smipred/rng.hpp"
#include "smipred/smiles.hpp"

using namespace smipred;

namespace {

struct MolFeatures {
  double hydrophobic = 0.0;
  double hydrophilic = 0.0;
  double aromatic = 0.0;
  double halogens = 0.0;
  double rings = 0.0;
  double branches = 0.0;
  double length = 0.0;
};

MolFeatures featurize(const std::string& smiles) {
  MolFeatures f;
  f.length = static_cast<double>(smiles.size());
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    const char c = smiles[i];
    if (c == 'C' && i + 1 < smiles.size() && smiles[i + 1] == 'l') {
      f.hydrophobic += 1.6;
      f.halogens += 1.0;
      ++i;
      continue;
    }
    if (c == 'B' && i + 1 < smiles.size() && smiles[i + 1] == 'r') {
      f.hydrophobic += 1.8;
      f.halogens += 1.0;
      ++i;
      continue;
    }
    switch (c) {
      case 'C': f.hydrophobic += 1.0; break;
      case 'c': f.hydrophobic += 1.0; f.aromatic += 1.0; break;
      case 'F': f.hydrophobic += 0.6; f.halogens += 1.0; break;
      case 'I': f.hydrophobic += 2.0; f.halogens += 1.0; break;
      case 'O': f.hydrophilic += 1.6; break;
      case 'o': f.hydrophilic += 1.4; f.aromatic += 1.0; break;
      case 'N': f.hydrophilic += 1.3; break;
      case 'n': f.hydrophilic += 1.2; f.aromatic += 1.0; break;
      case 'S': f.hydrophilic += 0.4; break;
      case 's': f.hydrophilic += 0.3; f.aromatic += 1.0; break;
      case '(': f.branches += 1.0; break;
      default: break;
    }
    if (c >= '1' && c <= '9') f.rings += 0.5;  // two digits per ring
  }
  return f;
}

// Random structurally plausible SMILES. Branches and ring closures are
// balanced by construction, so validate_smiles always passes.
class MoleculeSampler {
 public:
  explicit MoleculeSampler(std::uint64_t seed) : rng_(seed) {}

  std::string sample() {
    // lognormal-ish length profile, mostly 8..60 characters of atoms
    const double z = rng_.normal();
    int target = static_cast<int>(std::lround(22.0 * std::exp(0.45 * z)));
    target = std::clamp(target, 5, 110);

    std::string out;
    int open_branches = 0;
    int next_ring = 1;
    std::vector<int> open_rings;
    bool aromatic_run = false;
    int atoms = 0;

    while (atoms < target) {
      const double u = rng_.uniform();
      if (aromatic_run) {
        // aromatic stretches favor 'c' with occasional heteroatoms
        if (u < 0.70) out += 'c';
        else if (u < 0.78) out += 'n';
        else if (u < 0.84) out += 'o';
        else if (u < 0.88) out += 's';
        else { aromatic_run = false; out += 'C'; }
      } else {
        if (u < 0.42) out += 'C';
        else if (u < 0.54) out += 'N';
        else if (u < 0.68) out += 'O';
        else if (u < 0.72) out += 'S';
        else if (u < 0.76) out += 'F';
        else if (u < 0.80) out += "Cl";
        else if (u < 0.83) out += "Br";
        else if (u < 0.845) out += 'I';
        else { aromatic_run = true; out += 'c'; }
      }
      ++atoms;

      const double v = rng_.uniform();
      if (v < 0.10 && open_branches < 3 && atoms + 3 < target) {
        out += '(';
        ++open_branches;
      } else if (v < 0.20 && open_branches > 0) {
        out += ')';
        --open_branches;
      } else if (v < 0.26 && open_rings.empty() && next_ring <= 8 &&
                 atoms + 4 < target) {
        out += static_cast<char>('0' + next_ring);
        open_rings.push_back(next_ring++);
      } else if (v < 0.34 && !open_rings.empty() && out.size() > 3) {
        out += static_cast<char>('0' + open_rings.back());
        open_rings.pop_back();
      } else if (v < 0.38 && atoms + 1 < target &&
                 (out.back() == 'C' || out.back() == 'N')) {
        out += rng_.uniform() < 0.7 ? '=' : '#';
        // a bond symbol must be followed by an atom
        out += rng_.uniform() < 0.5 ? 'C' : (rng_.uniform() < 0.5 ? 'N' : 'O');
        ++atoms;
      }
    }
    while (open_branches-- > 0) out += ')';
    while (!open_rings.empty()) {
      out += static_cast<char>('0' + open_rings.back());
      open_rings.pop_back();
    }
    return out;
  }

 private:
  Rng rng_;
};

std::vector<std::string> sample_unique(std::size_t n, std::uint64_t seed) {
  MoleculeSampler sampler(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string s = sampler.sample();
    if (s.size() > kMaxSmilesLength) continue;
    if (!validate_smiles(s).valid) continue;
    if (!seen.insert(s).second) continue;
    out.push_back(std::move(s));
  }
  return out;
}

// Affine-calibrates raw scores to the requested mean/std, then clips.
std::vector<double> calibrate(std::vector<double> raw, double mean, double std,
                              double lo, double hi) {
  double m = 0.0;
  for (double v : raw) m += v;
  m /= static_cast<double>(raw.size());
  double var = 0.0;
  for (double v : raw) var += (v - m) * (v - m);
  const double s = std::sqrt(var / static_cast<double>(raw.size()));
  for (double& v : raw) v = std::clamp(mean + (v - m) / s * std, lo, hi);
  return raw;
}

void write_regression(const std::string& path,
                      const std::vector<std::string>& smiles,
                      const std::vector<double>& labels,
                      const std::string& label_name) {
  std::ofstream out(path);
  out << "smiles," << label_name << "\n";
  out.precision(6);
  for (std::size_t i = 0; i < smiles.size(); ++i)
    out << smiles[i] << ',' << labels[i] << "\n";
  std::cout << path << ": " << smiles.size() << " records\n";
}

void make_esol_like(const std::string& path, std::uint64_t seed) {
  auto smiles = sample_unique(1128, derive_seed(seed, "esol-mols"));
  Rng noise(derive_seed(seed, "esol-noise"));
  std::vector<double> raw;
  for (const auto& s : smiles) {
    const MolFeatures f = featurize(s);
    raw.push_back(1.05 * f.hydrophilic - 0.95 * f.hydrophobic -
                  0.55 * f.rings - 0.018 * f.length + 0.45 * noise.normal());
  }
  // log10 solubility scale of the aqueous solubility benchmark
  write_regression(path, smiles, calibrate(raw, -3.05, 2.05, -11.6, 1.58),
                   "logS");
}

void make_freesolv_like(const std::string& path, std::uint64_t seed) {
  auto smiles = sample_unique(643, derive_seed(seed, "freesolv-mols"));
  Rng noise(derive_seed(seed, "freesolv-noise"));
  std::vector<double> raw;
  for (const auto& s : smiles) {
    const MolFeatures f = featurize(s);
    raw.push_back(1.25 * f.hydrophilic - 0.35 * f.hydrophobic -
                  0.25 * f.aromatic + 0.8 * noise.normal());
  }
  // hydration free energy in kcal/mol
  write_regression(path, smiles, calibrate(raw, -3.8, 3.8, -25.5, 3.4),
                   "expt");
}

void make_tox21_like(const std::string& path, std::size_t n,
                     std::uint64_t seed) {
  const char* tasks[12] = {"NR-AR",    "NR-AR-LBD", "NR-AhR",
                           "NR-Aromatase", "NR-ER", "NR-ER-LBD",
                           "NR-PPAR-gamma", "SR-ARE", "SR-ATAD5",
                           "SR-HSE",   "SR-MMP",    "SR-p53"};
  const double prevalence[12] = {0.04, 0.03, 0.12, 0.05, 0.10, 0.05,
                                 0.03, 0.16, 0.04, 0.06, 0.15, 0.07};
  auto smiles = sample_unique(n, derive_seed(seed, "tox-mols"));
  Rng noise(derive_seed(seed, "tox-noise"));
  Rng missing(derive_seed(seed, "tox-missing"));

  // latent toxicity scores per task; the AhR-style task leans on aromatic
  // systems and halogens, the rest mix the features differently
  std::vector<std::vector<double>> latents(12,
                                           std::vector<double>(smiles.size()));
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    const MolFeatures f = featurize(smiles[i]);
    for (int t = 0; t < 12; ++t) {
      const double a = 0.35 + 0.12 * (t % 5);
      double v = 0.0;
      switch (t % 4) {
        case 0: v = f.aromatic + 1.5 * f.halogens - 0.4 * f.hydrophilic; break;
        case 1: v = f.hydrophobic - 0.8 * f.hydrophilic + 0.5 * f.rings; break;
        case 2: v = f.aromatic + 2.0 * f.halogens + 0.2 * f.branches; break;
        default: v = 0.6 * f.hydrophobic + f.rings - 0.3 * f.length * 0.1;
      }
      latents[static_cast<std::size_t>(t)][i] = v + a * 3.0 * noise.normal();
    }
  }

  // thresholds at the target prevalence
  std::vector<double> cut(12);
  for (int t = 0; t < 12; ++t) {
    std::vector<double> sorted = latents[static_cast<std::size_t>(t)];
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(
        std::floor((1.0 - prevalence[t]) * static_cast<double>(n)));
    cut[static_cast<std::size_t>(t)] = sorted[std::min(idx, n - 1)];
  }

  std::ofstream out(path);
  out << "smiles";
  for (const auto* t : tasks) out << ',' << t;
  out << "\n";
  for (std::size_t i = 0; i < smiles.size(); ++i) {
    out << smiles[i];
    for (int t = 0; t < 12; ++t) {
      // NR-AhR stays mostly observed; other tasks lose ~17% of labels
      const double miss_p = t == 2 ? 0.05 : 0.17;
      if (missing.uniform() < miss_p) {
        out << ',';
      } else {
        out << ','
            << (latents[static_cast<std::size_t>(t)][i] >
                        cut[static_cast<std::size_t>(t)]
                    ? 1
                    : 0);
      }
    }
    out << "\n";
  }
  std::cout << path << ": " << smiles.size() << " records, 12 tasks\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic stand-in dataset generator"};
  std::string out_dir = "data";
  std::uint64_t seed = 20260810;
  std::size_t tox_n = 8014;
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  app.add_option("--tox-records", tox_n, "Rows for the toxicity file");
  CLI11_PARSE(app, argc, argv);

  try {
    make_esol_like(out_dir + "/esol_synth.csv", seed);
    make_freesolv_like(out_dir + "/freesolv_synth.csv", seed);
    make_tox21_like(out_dir + "/tox21_synth.csv", tox_n, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
