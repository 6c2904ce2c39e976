#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jitterlab/dataset.hpp"
#include "jitterlab/model.hpp"
#include "jitterlab/tensor.hpp"

namespace jitterlab {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what)
      : std::runtime_error("CheckpointError: " + what) {}
};

// Versioned binary tensor container. Header: magic "JLCK", u32 version,
// u8 float width in bits, a UTF-8 metadata blob, and the shape table; the
// raw row-major arrays follow in table order. All integers and array bytes
// are little-endian. Writing the same content twice produces identical
// bytes.
struct TensorFile {
  std::string meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_tensor_file(const TensorFile& f, const std::string& path);

// Throws CheckpointError on a missing/truncated file, bad magic, an
// unsupported version, or a float width that does not match this build.
TensorFile read_tensor_file(const std::string& path);

// Model-level checkpoint: parameters plus everything needed to run
// prediction on raw text later (config and both vocabularies).
struct ModelCheckpoint {
  ModelParams params;
  Vocab source_vocab;
  Vocab target_vocab;
};

void save_model_checkpoint(const ModelCheckpoint& ck, const std::string& path);
ModelCheckpoint load_model_checkpoint(const std::string& path);

}  // namespace jitterlab
