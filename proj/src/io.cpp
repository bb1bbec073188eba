#include "iclab/io.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <system_error>

#include "iclab/errors.hpp"

namespace iclab::io {

namespace {

constexpr std::uint64_t kDatasetVersion = 1;
constexpr std::uint64_t kCheckpointVersion = 1;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

void rename_into_place(const std::filesystem::path& tmp, const std::filesystem::path& path) {
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail("cannot move temporary file into " + path.string());
    }
}

}  // namespace

// ----------------------------------------------------------------- text files

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) fail("error while reading " + path.string());
    return std::move(buf).str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("cannot create " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            fail("error while writing " + tmp.string());
        }
    }
    rename_into_place(tmp, path);
}

// ----------------------------------------------------------------------- json

Json parse_json(std::string_view text, const std::string& what) {
    Json j = Json::parse(text, /*cb=*/nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) fail(what + ": not valid JSON");
    return j;
}

Json read_json_file(const std::filesystem::path& path) {
    return parse_json(read_text(path), path.string());
}

void write_json_file(const std::filesystem::path& path, const Json& j, int indent) {
    std::string text = j.dump(indent);
    text.push_back('\n');
    write_text_atomic(path, text);
}

void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& what) {
    if (!j.is_object()) fail(what + ": expected a JSON object");
    for (const auto& item : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
            fail(what + ": unknown key \"" + item.key() + "\"");
    }
}

const Json& require(const Json& j, const std::string& key, const std::string& what) {
    if (!j.is_object() || !j.contains(key)) fail(what + ": missing key \"" + key + "\"");
    return j.at(key);
}

double require_double(const Json& j, const std::string& key, const std::string& what) {
    const Json& v = require(j, key, what);
    if (!v.is_number()) fail(what + ": \"" + key + "\" must be a number");
    return v.get<double>();
}

std::uint64_t require_uint(const Json& j, const std::string& key, const std::string& what) {
    const Json& v = require(j, key, what);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(what + ": \"" + key + "\" must be a non-negative integer");
}

std::string require_string(const Json& j, const std::string& key, const std::string& what) {
    const Json& v = require(j, key, what);
    if (!v.is_string()) fail(what + ": \"" + key + "\" must be a string");
    return v.get<std::string>();
}

// -------------------------------------------------------- matrices and vectors

Json matrix_to_json(const Matrix& m) {
    return Json(std::vector<double>(m.data(), m.data() + m.rows() * m.cols()));
}

Matrix matrix_from_json(const Json& j, std::size_t rows, std::size_t cols,
                        const std::string& what) {
    const std::vector<double> flat = vector_from_json(j, rows * cols, what);
    Matrix m(rows, cols);
    std::copy(flat.begin(), flat.end(), m.data());
    return m;
}

Json vector_to_json(const std::vector<double>& v) { return Json(v); }

std::vector<double> vector_from_json(const Json& j, std::size_t size, const std::string& what) {
    if (!j.is_array()) fail(what + ": expected an array");
    if (j.size() != size)
        fail(what + ": expected " + std::to_string(size) + " entries, found " +
             std::to_string(j.size()));
    std::vector<double> out;
    out.reserve(size);
    for (const Json& e : j) {
        if (!e.is_number()) fail(what + ": non-numeric entry");
        const double x = e.get<double>();
        if (!std::isfinite(x)) fail(what + ": non-finite entry");
        out.push_back(x);
    }
    return out;
}

// ------------------------------------------------------------------ model kind

Json kind_to_json(const ModelKind& kind) {
    Json j = Json::object();
    switch (kind.tag) {
        case ModelTag::linear:
            j["tag"] = "linear";
            break;
        case ModelTag::kernel:
            j["tag"] = "kernel";
            j["kernel"] = kind.kernel.kind == KernelSpec::Kind::dot ? "dot" : "rbf";
            if (kind.kernel.kind == KernelSpec::Kind::rbf) j["sigma2"] = kind.kernel.sigma2;
            break;
        case ModelTag::softmax:
            j["tag"] = "softmax";
            break;
        case ModelTag::softmax_frozen_qk:
            j["tag"] = "softmax_frozen_qk";
            j["c_sigma"] = kind.frozen_c_sigma;
            break;
    }
    return j;
}

ModelKind kind_from_json(const Json& j, const std::string& what) {
    check_keys(j, {"tag", "kernel", "sigma2", "c_sigma"}, what);
    const std::string tag = require_string(j, "tag", what);
    if (tag == "linear") return ModelKind::linear();
    if (tag == "softmax") return ModelKind::softmax();
    if (tag == "softmax_frozen_qk") {
        const double c_sigma = require_double(j, "c_sigma", what);
        if (!std::isfinite(c_sigma)) fail(what + ": c_sigma must be finite");
        return ModelKind::frozen(c_sigma);
    }
    if (tag == "kernel") {
        const std::string k = require_string(j, "kernel", what);
        if (k == "dot") return ModelKind::kernel_kind(KernelSpec::dot_product());
        if (k == "rbf")
            return ModelKind::kernel_kind(KernelSpec::rbf(require_double(j, "sigma2", what)));
        fail(what + ": unknown kernel \"" + k + "\"");
    }
    fail(what + ": unknown tag \"" + tag + "\"");
}

// -------------------------------------------------------------------- datasets

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
    Json j = Json::object();
    j["format"] = "iclab.dataset";
    j["version"] = kDatasetVersion;
    j["config"] = Json{{"d", ds.config.d}, {"C", ds.config.C}, {"n", ds.config.n}};
    j["seed"] = ds.seed;
    Json contexts = Json::array();
    for (const Context& ctx : ds.contexts) {
        Json c = Json::object();
        c["class_vectors"] = matrix_to_json(ctx.class_vectors);
        c["xs"] = matrix_to_json(ctx.xs);
        c["labels"] = Json(ctx.labels);
        c["x_query"] = vector_to_json(ctx.x_query);
        c["y_query"] = ctx.y_query;
        contexts.push_back(std::move(c));
    }
    j["contexts"] = std::move(contexts);
    write_json_file(path, j);
}

namespace {

void validate_loaded_context(const Context& ctx, const TaskConfig& cfg, const std::string& what) {
    constexpr double kUnitTol = 1e-9;
    auto check_unit_rows = [&](const Matrix& m, const char* name) {
        for (std::size_t r = 0; r < m.rows(); ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * m(r, c);
            if (std::abs(std::sqrt(s) - 1.0) > kUnitTol)
                fail(what + ": " + name + " row " + std::to_string(r) + " is not unit-norm");
        }
    };
    check_unit_rows(ctx.class_vectors, "class_vectors");
    check_unit_rows(ctx.xs, "xs");
    double qs = 0.0;
    for (double v : ctx.x_query) qs += v * v;
    if (std::abs(std::sqrt(qs) - 1.0) > kUnitTol) fail(what + ": x_query is not unit-norm");
    if (ctx.y_query >= cfg.C) fail(what + ": y_query out of range");

    std::vector<std::size_t> counts(cfg.C, 0);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const std::size_t y = ctx.labels[i];
        if (y >= cfg.C) fail(what + ": label out of range at index " + std::to_string(i));
        if (i > 0 && ctx.labels[i] < ctx.labels[i - 1])
            fail(what + ": labels are not class-sorted");
        if (assign_class(ctx.xs.row(i), ctx.class_vectors) != y)
            fail(what + ": label disagrees with nearest class vector at index " +
                 std::to_string(i));
        ++counts[y];
    }
    for (std::size_t c = 0; c < cfg.C; ++c)
        if (counts[c] != cfg.n / cfg.C)
            fail(what + ": class " + std::to_string(c) + " appears " +
                 std::to_string(counts[c]) + " times, expected " + std::to_string(cfg.n / cfg.C));
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
    const std::string what = path.string();
    const Json j = read_json_file(path);
    check_keys(j, {"format", "version", "config", "seed", "contexts"}, what);
    if (require_string(j, "format", what) != "iclab.dataset")
        fail(what + ": not a dataset file");
    if (require_uint(j, "version", what) != kDatasetVersion)
        fail(what + ": unsupported dataset version");

    const Json& cj = require(j, "config", what);
    check_keys(cj, {"d", "C", "n"}, what + ": config");
    Dataset ds;
    ds.config.d = static_cast<std::size_t>(require_uint(cj, "d", what + ": config"));
    ds.config.C = static_cast<std::size_t>(require_uint(cj, "C", what + ": config"));
    ds.config.n = static_cast<std::size_t>(require_uint(cj, "n", what + ": config"));
    ds.config.validate();
    ds.seed = require_uint(j, "seed", what);

    const Json& contexts = require(j, "contexts", what);
    if (!contexts.is_array()) fail(what + ": \"contexts\" must be an array");
    const TaskConfig& cfg = ds.config;
    for (std::size_t i = 0; i < contexts.size(); ++i) {
        const std::string cwhat = what + ": context " + std::to_string(i);
        const Json& c = contexts.at(i);
        check_keys(c, {"class_vectors", "xs", "labels", "x_query", "y_query"}, cwhat);
        Context ctx;
        ctx.class_vectors =
            matrix_from_json(require(c, "class_vectors", cwhat), cfg.C, cfg.d, cwhat);
        ctx.xs = matrix_from_json(require(c, "xs", cwhat), cfg.n, cfg.d, cwhat);
        const Json& labels = require(c, "labels", cwhat);
        if (!labels.is_array() || labels.size() != cfg.n)
            fail(cwhat + ": labels must be an array of " + std::to_string(cfg.n) + " entries");
        ctx.labels.reserve(cfg.n);
        for (const Json& l : labels) {
            if (!l.is_number_unsigned()) fail(cwhat + ": labels must be non-negative integers");
            ctx.labels.push_back(static_cast<std::size_t>(l.get<std::uint64_t>()));
        }
        ctx.x_query = vector_from_json(require(c, "x_query", cwhat), cfg.d, cwhat);
        ctx.y_query = static_cast<std::size_t>(require_uint(c, "y_query", cwhat));
        validate_loaded_context(ctx, cfg, cwhat);
        ds.contexts.push_back(std::move(ctx));
    }
    return ds;
}

// ------------------------------------------------------------------ checkpoints

Model Checkpoint::to_model() const {
    Model m;
    m.kind = kind;
    m.d = d;
    m.C = C;
    m.w = w;
    m.with_mlp = with_mlp;
    m.mlp = mlp;
    return m;
}

Checkpoint checkpoint_of(const Model& model, std::size_t step, std::uint64_t seed) {
    Checkpoint c;
    c.kind = model.kind;
    c.d = model.d;
    c.C = model.C;
    c.step = step;
    c.seed = seed;
    c.w = model.w;
    c.with_mlp = model.with_mlp;
    c.mlp = model.mlp;
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::size_t dim = ckpt.d + ckpt.C;
    ckpt.w.validate(dim);
    Json j = Json::object();
    j["format"] = "iclab.checkpoint";
    j["version"] = kCheckpointVersion;
    j["kind"] = kind_to_json(ckpt.kind);
    j["d"] = ckpt.d;
    j["C"] = ckpt.C;
    j["step"] = ckpt.step;
    j["seed"] = ckpt.seed;
    j["W_Q"] = matrix_to_json(ckpt.w.W_Q);
    j["W_K"] = matrix_to_json(ckpt.w.W_K);
    j["W_V"] = matrix_to_json(ckpt.w.W_V);
    j["W_O"] = matrix_to_json(ckpt.w.W_O);
    if (ckpt.with_mlp) {
        ckpt.mlp.validate(dim);
        Json m = Json::object();
        m["hidden"] = ckpt.mlp.b1.size();
        m["W1"] = matrix_to_json(ckpt.mlp.W1);
        m["b1"] = vector_to_json(ckpt.mlp.b1);
        m["W2"] = matrix_to_json(ckpt.mlp.W2);
        m["b2"] = vector_to_json(ckpt.mlp.b2);
        j["mlp"] = std::move(m);
    }
    write_json_file(path, j);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string what = path.string();
    const Json j = read_json_file(path);
    check_keys(j, {"format", "version", "kind", "d", "C", "step", "seed", "W_Q", "W_K", "W_V",
                   "W_O", "mlp"},
               what);
    if (require_string(j, "format", what) != "iclab.checkpoint")
        fail(what + ": not a checkpoint file");
    if (require_uint(j, "version", what) != kCheckpointVersion)
        fail(what + ": unsupported checkpoint version");

    Checkpoint c;
    c.kind = kind_from_json(require(j, "kind", what), what + ": kind");
    c.d = static_cast<std::size_t>(require_uint(j, "d", what));
    c.C = static_cast<std::size_t>(require_uint(j, "C", what));
    if (c.d == 0 || c.C == 0) fail(what + ": d and C must be positive");
    c.step = static_cast<std::size_t>(require_uint(j, "step", what));
    c.seed = require_uint(j, "seed", what);
    const std::size_t dim = c.d + c.C;
    c.w.W_Q = matrix_from_json(require(j, "W_Q", what), dim, dim, what + ": W_Q");
    c.w.W_K = matrix_from_json(require(j, "W_K", what), dim, dim, what + ": W_K");
    c.w.W_V = matrix_from_json(require(j, "W_V", what), dim, dim, what + ": W_V");
    c.w.W_O = matrix_from_json(require(j, "W_O", what), dim, dim, what + ": W_O");
    if (j.contains("mlp")) {
        const Json& m = j.at("mlp");
        const std::string mwhat = what + ": mlp";
        check_keys(m, {"hidden", "W1", "b1", "W2", "b2"}, mwhat);
        const std::size_t hidden = static_cast<std::size_t>(require_uint(m, "hidden", mwhat));
        if (hidden == 0) fail(mwhat + ": hidden must be positive");
        c.with_mlp = true;
        c.mlp.W1 = matrix_from_json(require(m, "W1", mwhat), dim, hidden, mwhat + ": W1");
        c.mlp.b1 = vector_from_json(require(m, "b1", mwhat), hidden, mwhat + ": b1");
        c.mlp.W2 = matrix_from_json(require(m, "W2", mwhat), hidden, dim, mwhat + ": W2");
        c.mlp.b2 = vector_from_json(require(m, "b2", mwhat), dim, mwhat + ": b2");
    }
    return c;
}

// ------------------------------------------------------------------------- csv

std::string format_double(double v) {
    std::array<char, 64> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

std::string format_uint(std::uint64_t v) {
    std::array<char, 24> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

namespace {

void append_csv_line(std::string& text, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) text.push_back(',');
        text += cells[i];
    }
    text.push_back('\n');
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    if (columns_ == 0) fail("csv: header must not be empty");
    for (const std::string& h : header)
        if (h.empty() || h.find_first_of(",\n\r\"") != std::string::npos)
            fail("csv: bad header cell \"" + h + "\"");
    append_csv_line(text_, header);
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        fail("csv: row has " + std::to_string(cells.size()) + " cells, expected " +
             std::to_string(columns_));
    for (const std::string& c : cells)
        if (c.find_first_of(",\n\r\"") != std::string::npos)
            fail("csv: bad cell \"" + c + "\"");
    append_csv_line(text_, cells);
    ++rows_;
}

void CsvWriter::add_row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(format_double(v));
    add_row(s);
}

void CsvWriter::write(const std::filesystem::path& path) const {
    write_text_atomic(path, text_);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_csv_double(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        fail(where + ": cannot parse \"" + cell + "\" as a number");
    return v;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path) {
    std::string text = read_text(path);
    const std::string name = path.string();
    if (text.empty()) fail(name + ": line 1: empty file");

    CsvTable table;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;
        ++line_no;
        const std::string where = name + ": line " + std::to_string(line_no);
        if (line.empty()) {
            if (pos < text.size()) fail(where + ": blank line");
            break;  // trailing newline
        }
        std::vector<std::string> cells = split_csv_line(line);
        if (line_no == 1) {
            table.header = std::move(cells);
            continue;
        }
        if (cells.size() != table.header.size())
            fail(where + ": expected " + std::to_string(table.header.size()) +
                 " cells, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const std::string& c : cells) row.push_back(parse_csv_double(c, where));
        table.rows.push_back(std::move(row));
    }
    if (table.header.empty()) fail(name + ": line 1: missing header");
    return table;
}

// ------------------------------------------------------------------------ misc

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    std::array<char, 17> buf{};
    for (int i = 15; i >= 0; --i) {
        buf[static_cast<std::size_t>(i)] = "0123456789abcdef"[h & 0xf];
        h >>= 4;
    }
    return std::string(buf.data(), 16);
}

std::string iso8601_utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::array<char, 32> buf{};
    const std::size_t len = std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf.data(), len);
}

}  // namespace iclab::io
