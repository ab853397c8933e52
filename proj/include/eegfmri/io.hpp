// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "eegfmri/signal.hpp"
#include "eegfmri/tensor.hpp"

namespace eegfmri {

struct TrainedModel;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
std::string file_checksum(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Tensor file: "EFTN" magic, u32 version (1), u32 rank, u64 dims[rank],
// then the row-major payload as little-endian IEEE-754 doubles.
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes, const std::string& source);
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

/// One individual's raw simultaneous recording.
struct RawSession {
  std::string individual_id;
  EEGRecording eeg;
  FMRIVolumeSeries fmri;
};

/// Layout:
///   root/dataset.json          individuals, generator description, coupling file
///   root/coupling.bin          optional ground-truth tensor
///   root/<id>/eeg.bin          [channels, samples]
///   root/<id>/fmri.bin         [volumes, x, y, z]
///   root/<id>/session.json     sampling rate, TR, start times, checksums
void save_dataset(const std::filesystem::path& root, const std::vector<RawSession>& sessions,
                  const std::string& description_json = "{}");
void save_session(const std::filesystem::path& root, const RawSession& session);
void write_dataset_index(const std::filesystem::path& root, const std::vector<std::string>& individuals,
                         const std::string& description_json = "{}");
std::vector<std::string> dataset_individuals(const std::filesystem::path& root);
RawSession load_session(const std::filesystem::path& root, const std::string& individual_id);
/// Validates the layout and every checksum (ChecksumMismatch); malformed
/// files raise FormatError naming the file and byte offset.
std::vector<RawSession> load_dataset(const std::filesystem::path& root);
/// The "description" object stored in dataset.json, serialized.
std::string dataset_description(const std::filesystem::path& root);

// Checkpoint: "EFCK" magic, u32 version, u64 header length, JSON header
// (procedure, architecture, shapes, network specs, parameter shapes,
// history), then every parameter block as little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height rows of width
};

/// Min-max normalized 8-bit slice z of a [x, y, z] volume; pixel (x, y) sits
/// in row y, column x. A constant slice maps to mid-gray (128).
GrayImage slice_image(const Tensor& volume, std::size_t z_index);
/// Writes slice_image() as a binary portable graymap (P5).
void emit_slice(const Tensor& volume, std::size_t z_index, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace eegfmri
