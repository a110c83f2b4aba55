#ifndef PMLE_VERSION_HPP
#define PMLE_VERSION_HPP

namespace pmle {

inline constexpr const char* version_string = "0.1.0";

}  // namespace pmle

#endif  // PMLE_VERSION_HPP
