#pragma once

#include <cstdint>

namespace cdl {

// nir = domain 0, vis = domain 1.
enum class Modality : std::uint8_t { nir = 0, vis = 1 };

inline Modality other(Modality m) { return m == Modality::nir ? Modality::vis : Modality::nir; }

}  // namespace cdl
