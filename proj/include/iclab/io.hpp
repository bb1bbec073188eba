// File formats: dataset and checkpoint JSON, CSV emission with
// shortest-round-trip number formatting, and strict readers for both.
// All writes go to a temporary file first and are renamed into place, so a
// crash can never leave a partially written artifact behind.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "iclab/attention.hpp"
#include "iclab/taskgen.hpp"
#include "iclab/training.hpp"

namespace iclab::io {

// insertion-ordered so dumps are byte-stable
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------- text files

std::string read_text(const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

// ---------------------------------------------------------------------- json

// parse errors surface as ValidationError naming `what`
Json parse_json(std::string_view text, const std::string& what);
Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j, int indent = -1);

// rejects keys outside `allowed` (typo safety); missing keys are the
// accessors' business
void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                const std::string& what);

// required-field accessors; absence or wrong type → ValidationError
const Json& require(const Json& j, const std::string& key, const std::string& what);
double require_double(const Json& j, const std::string& key, const std::string& what);
std::uint64_t require_uint(const Json& j, const std::string& key, const std::string& what);
std::string require_string(const Json& j, const std::string& key, const std::string& what);

// ------------------------------------------------------- matrices and vectors

// flat row-major array
Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, std::size_t rows, std::size_t cols,
                        const std::string& what);
Json vector_to_json(const std::vector<double>& v);
std::vector<double> vector_from_json(const Json& j, std::size_t size, const std::string& what);

// ---------------------------------------------------------------- model kind

Json kind_to_json(const ModelKind& kind);
ModelKind kind_from_json(const Json& j, const std::string& what);

// ------------------------------------------------------------------ datasets

// {format, version, config:{d,C,n}, seed, contexts:[{class_vectors, xs,
//  labels, x_query, y_query}]}, all matrices flat row-major
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

// re-validates every context invariant (shapes, unit rows, label consistency,
// class balance) so a hand-edited file cannot smuggle in a bad context
Dataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------- checkpoints

// {format, version, kind, d, C, step, seed, W_Q, W_K, W_V, W_O, [mlp]}
struct Checkpoint {
    ModelKind kind = ModelKind::linear();
    std::size_t d = 0;
    std::size_t C = 0;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    AttentionWeights w;
    bool with_mlp = false;
    MlpWeights mlp;

    Model to_model() const;
};

Checkpoint checkpoint_of(const Model& model, std::size_t step, std::uint64_t seed);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ----------------------------------------------------------------------- csv

// shortest representation that parses back to the same bits; '.' decimal
// separator regardless of locale
std::string format_double(double v);
std::string format_uint(std::uint64_t v);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);
    std::size_t columns() const { return columns_; }
    std::size_t rows() const { return rows_; }
    void add_row(const std::vector<std::string>& cells);
    void add_row(const std::vector<double>& cells);
    const std::string& str() const { return text_; }
    void write(const std::filesystem::path& path) const;

private:
    std::size_t columns_ = 0;
    std::size_t rows_ = 0;
    std::string text_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// strict numeric reader; any malformed line → ValidationError naming the
// 1-based line number
CsvTable read_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------- misc

// FNV-1a 64-bit, as 16 hex digits
std::string fnv1a_hex(std::string_view bytes);

// e.g. 2026-08-22T12:34:56Z
std::string iso8601_utc_now();

}  // namespace iclab::io
