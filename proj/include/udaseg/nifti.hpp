#pragma once

#include <string>

#include "udaseg/volume.hpp"

namespace udaseg {

// Minimal NIfTI-1 reader/writer (.nii and .nii.gz, little-endian).
// Volumes are written as float32, label maps as uint8; reading accepts
// uint8/int16/uint16/int32/float32/float64. qform/sform rows pass through.

Volume load_volume(const std::string& path);
void save_volume(const Volume& v, const std::string& path);

LabelMap load_labelmap(const std::string& path);
void save_labelmap(const LabelMap& l, const std::string& path);

// 4-d class-probability field (classes, z, y, x) used for soft predictions.
Tensor<float> load_prob_field(const std::string& path, Spacing* spacing = nullptr);
void save_prob_field(const Tensor<float>& probs, const Spacing& spacing, const Affine& affine,
                     const std::string& path);

}  // namespace udaseg
