#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace fdjb {

/// Error carrying a stable machine-readable code ("resonant-grid-point",
/// "ill-posed-interconnection", ...) plus a human-readable detail.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

    [[nodiscard]] const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace fdjb
