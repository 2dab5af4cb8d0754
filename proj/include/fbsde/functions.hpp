// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fbsde/error.hpp"
#include "fbsde/format.hpp"

namespace fbsde {

/// Deterministic scalar function selected by name from a small registry:
///   constant c          -> c
///   linear a b          -> a + b x
///   polynomial c0 ... cn -> sum c_i x^i
///   exponential a k     -> a exp(k x)
class ScalarFunction {
public:
    enum class Kind { constant, linear, polynomial, exponential };

    ScalarFunction() : ScalarFunction(Kind::constant, {0.0}) {}
    ScalarFunction(Kind kind, std::vector<double> params) : kind_(kind), params_(std::move(params)) {
        const std::size_t need = kind == Kind::constant ? 1 : kind == Kind::polynomial ? 0 : 2;
        if (kind == Kind::polynomial ? params_.empty() : params_.size() != need)
            throw ConfigError("wrong number of parameters for function '" + name() + "'");
    }

    static ScalarFunction constant(double c) { return {Kind::constant, {c}}; }
    static ScalarFunction linear(double a, double b) { return {Kind::linear, {a, b}}; }
    static ScalarFunction polynomial(std::vector<double> c) { return {Kind::polynomial, std::move(c)}; }
    static ScalarFunction exponential(double a, double k) { return {Kind::exponential, {a, k}}; }

    /// Parses "name p1 p2 ...".
    static ScalarFunction parse(std::string_view text) {
        std::istringstream in{std::string(text)};
        std::string name, tok;
        in >> name;
        std::vector<double> params;
        while (in >> tok) params.push_back(parse_double(tok));
        if (name == "constant") return {Kind::constant, params};
        if (name == "linear") return {Kind::linear, params};
        if (name == "polynomial") return {Kind::polynomial, params};
        if (name == "exponential") return {Kind::exponential, params};
        throw ConfigError("unknown function '" + name + "'");
    }

    std::string to_string() const {
        std::string s = name();
        for (double p : params_) s += ' ' + format_double(p);
        return s;
    }

    std::string name() const {
        switch (kind_) {
            case Kind::constant: return "constant";
            case Kind::linear: return "linear";
            case Kind::polynomial: return "polynomial";
            case Kind::exponential: return "exponential";
        }
        return "?";
    }

    Kind kind() const noexcept { return kind_; }
    const std::vector<double>& params() const noexcept { return params_; }

    double operator()(double x) const { return derivative(x, 0); }

    /// order-th derivative, order in {0, 1, 2}.
    double derivative(double x, int order) const {
        switch (kind_) {
            case Kind::constant: return order == 0 ? params_[0] : 0.0;
            case Kind::linear:
                return order == 0 ? params_[0] + params_[1] * x : order == 1 ? params_[1] : 0.0;
            case Kind::polynomial: {
                double s = 0.0;
                for (std::size_t i = params_.size(); i-- > static_cast<std::size_t>(order);) {
                    double c = params_[i];
                    for (int r = 0; r < order; ++r) c *= static_cast<double>(i - static_cast<std::size_t>(r));
                    s = s * x + c;
                }
                return s;
            }
            case Kind::exponential:
                return params_[0] * std::pow(params_[1], order) * std::exp(params_[1] * x);
        }
        return 0.0;
    }

    /// Polynomial growth degree; -1 when growth is not polynomial.
    int growth_degree() const {
        switch (kind_) {
            case Kind::constant: return 0;
            case Kind::linear: return params_[1] != 0.0 ? 1 : 0;
            case Kind::polynomial: return static_cast<int>(params_.size()) - 1;
            case Kind::exponential: return params_[1] == 0.0 ? 0 : -1;
        }
        return -1;
    }

    bool operator==(const ScalarFunction&) const = default;

private:
    Kind kind_;
    std::vector<double> params_;
};

}  // namespace fbsde
