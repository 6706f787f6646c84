#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "cpl/index.hpp"
#include "cpl/model.hpp"
#include "cpl/vocab.hpp"

namespace cpl {

/// Model file: magic "CPLM", version u32, V u64, d u64, flags u32, then
/// row-major little-endian f64 matrices (embedding, query projection, passage
/// projection), then V length-prefixed (u32) UTF-8 token strings.
void save_model(const EncoderModel& model, const Vocabulary& vocab, const std::string& path);

struct ModelBundle {
  EncoderModel model;
  std::shared_ptr<const Vocabulary> vocab;
};

ModelBundle load_model(const std::string& path);

/// Index file: magic "CPIX", version u32, rows u64, d u64, flags u32 (bit 0:
/// clip alpha present), clip alpha f64, row matrix, norms, then row ids as
/// length-prefixed strings.
void save_index(const RetrievalIndex& index, const std::string& path);
RetrievalIndex load_index(const std::string& path);

std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 1469598103934665603ULL);
std::uint64_t file_digest(const std::string& path);
std::string digest_hex(std::uint64_t digest);

}  // namespace cpl
