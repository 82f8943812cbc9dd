#pragma once

#include <string>

#include "volt3d/model.hpp"

namespace volt3d {

// Binary checkpoint: magic "V3DC", format version, RNG seed, the canonical
// architecture text, then one record per parameter tensor (name, dims, f32
// little-endian payload) in for_each_param order. Writing the same model twice
// produces byte-identical files.
void save_checkpoint(const ModelF& m, const std::string& path);

// Throws IoError (IoFailure), ConfigError (BadMagic / VersionMismatch) or
// DataError (CorruptRecord).
ModelF load_checkpoint(const std::string& path);

} // namespace volt3d
