#include "gbsde/io.hpp"

#include <toml.hpp>

#include <charconv>
#include <fstream>
#include <system_error>

namespace gbsde {

std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) {
        throw std::runtime_error("format_double: conversion failed");
    }
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::initializer_list<std::string_view> header)
{
    bool first = true;
    for (auto name : header) {
        if (!first) {
            out_ << ',';
        }
        out_ << name;
        first = false;
    }
    out_ << '\n';
}

CsvWriter& CsvWriter::cell(double v)
{
    if (row_open_) {
        out_ << ',';
    }
    out_ << format_double(v);
    row_open_ = true;
    return *this;
}

CsvWriter& CsvWriter::cell(long long v)
{
    if (row_open_) {
        out_ << ',';
    }
    out_ << v;
    row_open_ = true;
    return *this;
}

CsvWriter& CsvWriter::cell(std::string_view v)
{
    if (row_open_) {
        out_ << ',';
    }
    out_ << v;
    row_open_ = true;
    return *this;
}

CsvWriter& CsvWriter::end_row()
{
    out_ << '\n';
    row_open_ = false;
    return *this;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

namespace {

double require_number(const toml::node_view<const toml::node>& node, const std::string& where)
{
    if (auto v = node.value<double>()) {
        return *v;
    }
    throw ValidationError("config: '" + where + "' must be a number");
}

std::vector<double> number_list(const toml::node_view<const toml::node>& node, const std::string& where)
{
    std::vector<double> out;
    const auto* arr = node.as_array();
    if (arr == nullptr) {
        throw ValidationError("config: '" + where + "' must be an array of numbers");
    }
    for (const auto& item : *arr) {
        auto v = item.value<double>();
        if (!v) {
            throw ValidationError("config: '" + where + "' must contain only numbers");
        }
        out.push_back(*v);
    }
    return out;
}

CoefficientFn parse_coefficient(const toml::node_view<const toml::node>& node, const std::string& where,
                                const CoefficientFn& fallback, bool required)
{
    if (!node) {
        if (required) {
            throw ValidationError("config: missing '" + where + "'");
        }
        return fallback;
    }
    const auto* table = node.as_table();
    if (table == nullptr) {
        throw ValidationError("config: '" + where + "' must be a table with 'kind' and 'params'");
    }
    auto kind = node["kind"].value<std::string>();
    if (!kind) {
        throw ValidationError("config: '" + where + ".kind' must be a string");
    }
    return CoefficientFn(coefficient_kind_from_string(*kind), number_list(node["params"], where + ".params"));
}

GeneratorFn parse_generator(const toml::node_view<const toml::node>& node, const std::string& where, int component, int k)
{
    std::vector<GeneratorTerm> terms;
    if (!node) {
        return GeneratorFn(component, terms);
    }
    const auto* arr = node.as_array();
    if (arr == nullptr) {
        throw ValidationError("config: '" + where + "' must be an array of term tables");
    }
    for (std::size_t n = 0; n < arr->size(); ++n) {
        const std::string item_where = where + "[" + std::to_string(n) + "]";
        toml::node_view<const toml::node> item{arr->get(n)};
        auto kind = item["kind"].value<std::string>();
        if (!kind) {
            throw ValidationError("config: '" + item_where + ".kind' must be a string");
        }
        GeneratorTerm term;
        term.kind = generator_term_kind_from_string(*kind);
        term.coef = require_number(item["coef"], item_where + ".coef");
        if (term.kind == GeneratorTermKind::linear_y || term.kind == GeneratorTermKind::arctan_y) {
            auto j = item["component"].value<int64_t>();
            if (!j) {
                throw ValidationError("config: '" + item_where + ".component' (1-based) is required for y terms");
            }
            if (*j < 1 || *j > k) {
                throw ValidationError("config: '" + item_where + ".component' = " + std::to_string(*j)
                                      + " outside 1.." + std::to_string(k));
            }
            term.component = static_cast<int>(*j - 1);
        }
        terms.push_back(term);
    }
    return GeneratorFn(component, std::move(terms));
}

} // namespace

ProblemSpec parse_problem_toml(const std::string& text)
{
    toml::table doc;
    try {
        doc = toml::parse(text);
    } catch (const toml::parse_error& err) {
        std::ostringstream msg;
        msg << "config: TOML parse error: " << err.description() << " at line " << err.source().begin.line;
        throw ValidationError(msg.str());
    }
    toml::node_view<const toml::node> root{doc};

    ProblemSpec spec;
    const auto k = root["k"].value<int64_t>();
    if (!k) {
        throw ValidationError("config: missing integer 'k'");
    }
    spec.k = static_cast<int>(*k);
    spec.T = require_number(root["T"], "T");
    spec.L = require_number(root["L"], "L");
    spec.x0 = root["x0"].value<double>().value_or(0.0);
    spec.g_params = GParams(require_number(root["volatility"]["sigma_lo_sq"], "volatility.sigma_lo_sq"),
                            require_number(root["volatility"]["sigma_hi_sq"], "volatility.sigma_hi_sq"));

    const auto coeffs = root["coefficients"];
    spec.b = parse_coefficient(coeffs["b"], "coefficients.b", CoefficientFn::constant(0.0), false);
    spec.h = parse_coefficient(coeffs["h"], "coefficients.h", CoefficientFn::constant(0.0), false);
    spec.sigma = parse_coefficient(coeffs["sigma"], "coefficients.sigma", CoefficientFn::constant(1.0), false);

    const auto* components = root["component"].as_array();
    if (components == nullptr) {
        throw ValidationError("config: missing [[component]] tables");
    }
    for (std::size_t i = 0; i < components->size(); ++i) {
        const std::string where = "component[" + std::to_string(i + 1) + "]";
        toml::node_view<const toml::node> comp{components->get(i)};
        spec.phi.push_back(parse_coefficient(comp["phi"], where + ".phi", {}, true));
        spec.l.push_back(parse_coefficient(comp["obstacle"], where + ".obstacle", {}, true));
        spec.l_tilde.push_back(parse_coefficient(comp["dominator"], where + ".dominator", {}, true));
        spec.f.push_back(parse_generator(comp["f"], where + ".f", static_cast<int>(i), spec.k));
        spec.g.push_back(parse_generator(comp["g"], where + ".g", static_cast<int>(i), spec.k));
    }
    spec.check_structure();
    return spec;
}

ProblemSpec load_problem(const std::filesystem::path& path)
{
    return parse_problem_toml(read_text(path));
}

} // namespace gbsde
