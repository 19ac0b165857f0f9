// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "sdf/tensor.hpp"

namespace sdf {

// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

// Digest of the shape (u64 LE per dim) followed by the f64 LE payload.
std::string tensor_digest(const Tensor& t);

}  // namespace sdf
