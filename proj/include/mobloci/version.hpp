#pragma once

namespace mobloci {

inline constexpr const char *version = "1.0.0";

} // namespace mobloci
