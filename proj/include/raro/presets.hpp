#pragma once

// Named model sizes. "tiny" and "small" are small enough for exhaustive
// finite-difference checks; "desk" is the size used for training runs.

#include <string>
#include <vector>

#include "seqmodel.hpp"

namespace raro {

inline std::vector<std::string> preset_names() { return {"tiny", "small", "desk"}; }

inline Arch preset_arch(const std::string& name) {
  if (name == "tiny") return Arch{4, 2, 8, 1, tok::kCount};
  if (name == "small") return Arch{8, 4, 24, 1, tok::kCount};
  if (name == "desk") return Arch{32, 8, 96, 1, tok::kCount};
  throw ConfigInvalid("unknown model preset '" + name + "'");
}

}  // namespace raro
