// SPDX-License-Identifier: Apache-2.0
//
// Trial files, corpus manifests, resampling, training pair extraction and
// train/test splitting.
#pragma once

#include "gaitloop/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gaitloop::ingest {

/// Input window (frames t-n+1..t) and plantar target at frame t+s.
struct WindowPair {
  Matrix input;
  Vector target;
  std::size_t anchor = 0;
};

/// Loads a TrialFile CSV. Layout columns:
///   time_s, imu<i>_{ax,ay,az,gx,gy,gz} (i = 1..m), plantar_{l,r}_{heel,mid,toe},
///   optional phase_l, phase_r (GaitPhase integer codes).
/// Uniformly sampled files keep their rate; irregular timestamps are linearly
/// resampled onto the nearest integer-rate grid. `m` and `k` are taken from
/// `layout`. Subject and body weight come from the manifest, so the returned
/// trial has body_weight_N = 1 until the caller fills it in.
GaitTrial load_trial(const std::filesystem::path& path, const SensorLayout& layout = {});

/// Serializes a trial in the TrialFile layout (phase columns when truth is present).
std::string trial_to_csv(const GaitTrial& trial);
void write_trial(const GaitTrial& trial, const std::filesystem::path& path);

/// Linear resampling of every channel onto a uniform `target_hz` grid spanning
/// the original time range; phase labels use the nearest original sample.
GaitTrial resample(const GaitTrial& trial, int target_hz);

/// Anchors t = n-1, n-1+stride, ... while t+s < T.
std::vector<std::size_t> pair_anchors(std::size_t T, std::size_t n, std::size_t s, std::size_t stride = 5);
std::vector<WindowPair> make_pairs(const GaitTrial& trial, std::size_t n, std::size_t s, std::size_t stride = 5);

struct ManifestEntry {
  std::string id;
  std::string path;  ///< relative to the manifest directory
  std::string subject_id;
  double body_weight_N = 0.0;
  TrialKind kind = TrialKind::Unknown;
  int native_rate_hz = 100;
};

struct CorpusManifest {
  int format_version = 1;
  int rate_hz = 100;
  SensorLayout layout;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> trials;

  std::vector<std::string> subjects() const;
  std::vector<ManifestEntry> trials_of(const std::string& subject) const;
  const ManifestEntry& find(const std::string& trial_id) const;
};

CorpusManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const CorpusManifest& manifest);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Loads one manifest trial, attaches its metadata and resamples to the corpus rate.
GaitTrial load_corpus_trial(const CorpusManifest& manifest, const std::filesystem::path& manifest_dir,
                            const ManifestEntry& entry);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Per subject: 8/2 with one patterned + one random trial in test when the
/// subject has 10 trials, otherwise a seeded 80/20 split (at least one test
/// trial). Throws ConfigError when a subject has fewer than 3 trials.
DatasetSplit split_corpus(const std::vector<ManifestEntry>& trials, std::uint64_t seed);

/// Per-channel mean and (population) standard deviation of IMU samples.
struct ChannelStats {
  Vector mean;
  Vector stddev;
};
ChannelStats imu_channel_stats(const std::vector<const GaitTrial*>& trials);

}  // namespace gaitloop::ingest
