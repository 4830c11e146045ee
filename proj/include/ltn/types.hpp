#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace ltn {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using Index = std::int64_t;

/// Subdomain a triangle belongs to.
enum class Label : std::uint8_t { Local = 0, Nonlocal = 1, Exterior = 2 };

inline std::string_view to_string(Label label) {
    switch (label) {
    case Label::Local: return "local";
    case Label::Nonlocal: return "nonlocal";
    case Label::Exterior: return "exterior";
    }
    return "?";
}

inline Label label_from_string(std::string_view name) {
    if (name == "local") return Label::Local;
    if (name == "nonlocal") return Label::Nonlocal;
    if (name == "exterior") return Label::Exterior;
    throw std::invalid_argument("unknown label name: " + std::string(name));
}

enum class ErrorCode {
    ParseFailure,
    UnknownLabel,
    NonConforming,
    EmptySubdomain,
    EmptyInterface,
    NotClosed,
    DegenerateTriangle,
    OutOfDomain,
    NegativeWeight,
    InvalidArgument,
    SolverFailure,
    StepFailure,
    InterfaceMismatch,
    ConfigError,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::NonConforming: return "NonConforming";
    case ErrorCode::EmptySubdomain: return "EmptySubdomain";
    case ErrorCode::EmptyInterface: return "EmptyInterface";
    case ErrorCode::NotClosed: return "NotClosed";
    case ErrorCode::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorCode::OutOfDomain: return "OutOfDomain";
    case ErrorCode::NegativeWeight: return "NegativeWeight";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::StepFailure: return "StepFailure";
    case ErrorCode::InterfaceMismatch: return "InterfaceMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Single exception type of the library; `code()` says what went wrong.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace ltn
