#pragma once

#include <string_view>

namespace mgp {

/// Artifact version, `<semver>+<git describe>` when built from a checkout.
std::string_view version() noexcept;

}  // namespace mgp
