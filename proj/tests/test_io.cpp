#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <charconv>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "iclab/errors.hpp"
#include "iclab/io.hpp"
#include "iclab/taskgen.hpp"
#include "iclab/training.hpp"

using namespace iclab;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "iclab_io_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return std::memcmp(a.data(), b.data(), sizeof(double) * a.rows() * a.cols()) == 0;
}

}  // namespace

TEST_CASE("format_double round-trips awkward values exactly") {
    const double values[] = {0.0,   -0.0,    1.0,       0.1,    1.0 / 3.0, 1e-300, 1e300,
                             100.0, -2.5e-7, 3.1415926, 1e-323, 123456789.123456789};
    for (double v : values) {
        const std::string s = io::format_double(v);
        double back = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), back);
        REQUIRE(res.ec == std::errc{});
        REQUIRE(res.ptr == s.data() + s.size());
        CHECK(std::memcmp(&back, &v, sizeof(double)) == 0);
        CHECK(s.find(',') == std::string::npos);
    }
    CHECK(io::format_uint(0) == "0");
    CHECK(io::format_uint(18446744073709551615ull) == "18446744073709551615");
}

TEST_CASE("csv writer emits the documented layout") {
    io::CsvWriter w({"step", "eval_loss"});
    w.add_row({io::format_uint(0), io::format_double(1.5)});
    w.add_row({io::format_uint(100), io::format_double(0.25)});
    CHECK(w.str() == "step,eval_loss\n0,1.5\n100,0.25\n");
    CHECK(w.columns() == 2);
    CHECK(w.rows() == 2);

    CHECK_THROWS_AS(w.add_row(std::vector<std::string>{"1"}), ValidationError);
    CHECK_THROWS_AS(w.add_row(std::vector<std::string>{"1", "a,b"}), ValidationError);
    CHECK_THROWS_AS(io::CsvWriter({}), ValidationError);
    CHECK_THROWS_AS(io::CsvWriter({"has,comma"}), ValidationError);
}

TEST_CASE("csv write/read round trip preserves every bit") {
    const fs::path path = test_dir() / "round.csv";
    io::CsvWriter w({"a", "b", "c"});
    const std::vector<std::vector<double>> rows = {
        {0.1, -2.5e-7, 1e300}, {1.0 / 3.0, -0.0, 42.0}, {1e-323, 999999.25, -17.125}};
    for (const auto& r : rows) w.add_row(r);
    w.write(path);
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));

    const io::CsvTable t = io::read_csv(path);
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::memcmp(&t.rows[i][j], &rows[i][j], sizeof(double)) == 0);
}

TEST_CASE("csv reader reports malformed input with line numbers") {
    const fs::path dir = test_dir();

    io::write_text_atomic(dir / "empty.csv", "");
    CHECK_THROWS_WITH_AS(io::read_csv(dir / "empty.csv"),
                         doctest::Contains("line 1"), ValidationError);

    io::write_text_atomic(dir / "headonly.csv", "x,y\n");
    const io::CsvTable head = io::read_csv(dir / "headonly.csv");
    CHECK(head.header.size() == 2);
    CHECK(head.rows.empty());

    io::write_text_atomic(dir / "badcell.csv", "x,y\n1,2\n3,oops\n");
    CHECK_THROWS_WITH_AS(io::read_csv(dir / "badcell.csv"),
                         doctest::Contains("line 3"), ValidationError);

    io::write_text_atomic(dir / "ragged.csv", "x,y\n1,2,3\n");
    CHECK_THROWS_WITH_AS(io::read_csv(dir / "ragged.csv"),
                         doctest::Contains("line 2"), ValidationError);

    io::write_text_atomic(dir / "crlf.csv", "x,y\r\n1,2\r\n");
    const io::CsvTable crlf = io::read_csv(dir / "crlf.csv");
    REQUIRE(crlf.rows.size() == 1);
    CHECK(crlf.rows[0][1] == 2.0);

    CHECK_THROWS_AS(io::read_csv(dir / "does_not_exist.csv"), ValidationError);
}

TEST_CASE("atomic text write replaces content and leaves no temp file") {
    const fs::path path = test_dir() / "atomic.txt";
    io::write_text_atomic(path, "first");
    io::write_text_atomic(path, "second");
    CHECK(io::read_text(path) == "second");
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_CASE("dataset save/load round trip is exact and deterministic") {
    const TaskConfig cfg{.d = 3, .C = 2, .n = 4};
    const Dataset ds = generate_dataset(cfg, 991, 3);
    const fs::path path = test_dir() / "ds.json";
    io::save_dataset(path, ds);
    const std::string bytes1 = io::read_text(path);
    io::save_dataset(path, ds);
    CHECK(io::read_text(path) == bytes1);

    const Dataset back = io::load_dataset(path);
    CHECK(back.config.d == cfg.d);
    CHECK(back.config.C == cfg.C);
    CHECK(back.config.n == cfg.n);
    CHECK(back.seed == 991);
    REQUIRE(back.contexts.size() == ds.contexts.size());
    for (std::size_t i = 0; i < ds.contexts.size(); ++i) {
        const Context& a = ds.contexts[i];
        const Context& b = back.contexts[i];
        CHECK(same_matrix(a.class_vectors, b.class_vectors));
        CHECK(same_matrix(a.xs, b.xs));
        CHECK(a.labels == b.labels);
        CHECK(a.x_query == b.x_query);
        CHECK(a.y_query == b.y_query);
    }
}

TEST_CASE("dataset loader rejects tampered files") {
    const TaskConfig cfg{.d = 2, .C = 2, .n = 4};
    const Dataset ds = generate_dataset(cfg, 5, 1);
    const fs::path path = test_dir() / "tamper.json";

    io::save_dataset(path, ds);
    io::Json j = io::read_json_file(path);

    SUBCASE("unknown top-level key") {
        j["surprise"] = 1;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_dataset(path), doctest::Contains("unknown key"),
                             ValidationError);
    }
    SUBCASE("wrong format tag") {
        j["format"] = "iclab.checkpoint";
        io::write_json_file(path, j);
        CHECK_THROWS_AS(io::load_dataset(path), ValidationError);
    }
    SUBCASE("future version") {
        j["version"] = 2;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_dataset(path), doctest::Contains("version"),
                             ValidationError);
    }
    SUBCASE("non-unit sample row") {
        j["contexts"][0]["xs"][0] = 3.0;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_dataset(path), doctest::Contains("unit-norm"),
                             ValidationError);
    }
    SUBCASE("label inconsistent with class vectors") {
        auto& labels = j["contexts"][0]["labels"];
        std::vector<std::size_t> flipped = labels.get<std::vector<std::size_t>>();
        for (auto& l : flipped) l = 1 - l;  // breaks nearest-class consistency, stays sorted?
        // flipping reverses sort order too; the loader must reject either way
        labels = flipped;
        io::write_json_file(path, j);
        CHECK_THROWS_AS(io::load_dataset(path), ValidationError);
    }
    SUBCASE("query label out of range") {
        j["contexts"][0]["y_query"] = 7;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_dataset(path), doctest::Contains("y_query"),
                             ValidationError);
    }
    SUBCASE("wrong xs length") {
        j["contexts"][0]["xs"].push_back(0.5);
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_dataset(path), doctest::Contains("entries"),
                             ValidationError);
    }
    SUBCASE("non-finite entry") {
        std::string text = io::read_text(path);
        const std::string needle = "\"seed\":5";
        const auto at = text.find(needle);
        REQUIRE(at != std::string::npos);
        text.replace(at, needle.size(), "\"seed\":5e999");
        io::write_text_atomic(path, text);
        CHECK_THROWS_AS(io::load_dataset(path), ValidationError);
    }
}

TEST_CASE("model kind json round trip") {
    const ModelKind kinds[] = {ModelKind::linear(), ModelKind::softmax(),
                               ModelKind::kernel_kind(KernelSpec::dot_product()),
                               ModelKind::kernel_kind(KernelSpec::rbf(0.8)),
                               ModelKind::frozen(1.3)};
    for (const ModelKind& k : kinds) {
        const ModelKind back = io::kind_from_json(io::kind_to_json(k), "kind");
        CHECK(back.tag == k.tag);
        CHECK(back.kernel.kind == k.kernel.kind);
        if (k.tag == ModelTag::kernel && k.kernel.kind == KernelSpec::Kind::rbf)
            CHECK(back.kernel.sigma2 == k.kernel.sigma2);
        if (k.tag == ModelTag::softmax_frozen_qk)
            CHECK(back.frozen_c_sigma == k.frozen_c_sigma);
    }
    CHECK_THROWS_AS(io::kind_from_json(io::Json{{"tag", "mystery"}}, "kind"), ValidationError);
    CHECK_THROWS_AS(io::kind_from_json(io::Json{{"tag", "kernel"}, {"kernel", "rbf"}}, "kind"),
                    ValidationError);  // rbf needs sigma2
    CHECK_THROWS_AS(
        io::kind_from_json(io::Json{{"tag", "linear"}, {"padding", 1}}, "kind"),
        ValidationError);
}

TEST_CASE("checkpoint save/load round trip across kinds") {
    const std::size_t d = 3, C = 2;
    const ModelKind kinds[] = {ModelKind::linear(), ModelKind::softmax(),
                               ModelKind::kernel_kind(KernelSpec::rbf(0.5)),
                               ModelKind::frozen(0.9)};
    int idx = 0;
    for (const ModelKind& kind : kinds) {
        for (bool with_mlp : {false, true}) {
            const Model m = make_model(kind, d, C, 0.02, 77 + static_cast<unsigned>(idx),
                                       with_mlp);
            const fs::path path =
                test_dir() / ("ckpt_" + std::to_string(idx) + (with_mlp ? "_mlp" : "") + ".json");
            io::save_checkpoint(path, io::checkpoint_of(m, 123, 77));
            const std::string bytes1 = io::read_text(path);
            io::save_checkpoint(path, io::checkpoint_of(m, 123, 77));
            CHECK(io::read_text(path) == bytes1);

            const io::Checkpoint back = io::load_checkpoint(path);
            CHECK(back.kind.tag == kind.tag);
            CHECK(back.d == d);
            CHECK(back.C == C);
            CHECK(back.step == 123);
            CHECK(back.seed == 77);
            CHECK(same_matrix(back.w.W_Q, m.w.W_Q));
            CHECK(same_matrix(back.w.W_K, m.w.W_K));
            CHECK(same_matrix(back.w.W_V, m.w.W_V));
            CHECK(same_matrix(back.w.W_O, m.w.W_O));
            REQUIRE(back.with_mlp == with_mlp);
            if (with_mlp) {
                CHECK(same_matrix(back.mlp.W1, m.mlp.W1));
                CHECK(same_matrix(back.mlp.W2, m.mlp.W2));
                CHECK(back.mlp.b1 == m.mlp.b1);
                CHECK(back.mlp.b2 == m.mlp.b2);
            }
            const Model rebuilt = back.to_model();
            CHECK(rebuilt.with_mlp == with_mlp);
            CHECK(rebuilt.dim() == d + C);
        }
        ++idx;
    }
}

TEST_CASE("checkpoint loader rejects malformed files") {
    const Model m = make_model(ModelKind::softmax(), 2, 2, 0.02, 9);
    const fs::path path = test_dir() / "ckpt_bad.json";
    io::save_checkpoint(path, io::checkpoint_of(m, 0, 9));
    io::Json j = io::read_json_file(path);

    SUBCASE("unknown key") {
        j["extra"] = true;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_checkpoint(path), doctest::Contains("unknown key"),
                             ValidationError);
    }
    SUBCASE("truncated weight matrix") {
        auto flat = j["W_Q"].get<std::vector<double>>();
        flat.pop_back();
        j["W_Q"] = flat;
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_checkpoint(path), doctest::Contains("W_Q"),
                             ValidationError);
    }
    SUBCASE("zero dimensions") {
        j["d"] = 0;
        io::write_json_file(path, j);
        CHECK_THROWS_AS(io::load_checkpoint(path), ValidationError);
    }
    SUBCASE("missing matrix") {
        j.erase("W_O");
        io::write_json_file(path, j);
        CHECK_THROWS_WITH_AS(io::load_checkpoint(path), doctest::Contains("W_O"),
                             ValidationError);
    }
}

TEST_CASE("json strict-key helper") {
    const io::Json j{{"a", 1}, {"b", 2}};
    CHECK_NOTHROW(io::check_keys(j, {"a", "b", "c"}, "obj"));
    CHECK_THROWS_WITH_AS(io::check_keys(j, {"a"}, "obj"), doctest::Contains("\"b\""),
                         ValidationError);
    CHECK_THROWS_AS(io::check_keys(io::Json::array(), {"a"}, "obj"), ValidationError);
    CHECK_THROWS_AS(io::parse_json("{not json", "cfg"), ValidationError);
    CHECK(io::require_uint(j, "a", "obj") == 1);
    CHECK_THROWS_AS(io::require_uint(j, "missing", "obj"), ValidationError);
    CHECK_THROWS_AS(io::require_string(j, "a", "obj"), ValidationError);
}

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(io::fnv1a_hex("") == "cbf29ce484222325");
    CHECK(io::fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(io::fnv1a_hex("foobar") == "85944171f73967e8");
    CHECK(io::fnv1a_hex("x") != io::fnv1a_hex("y"));
}

TEST_CASE("utc timestamp has the documented shape") {
    const std::string t = io::iso8601_utc_now();
    REQUIRE(t.size() == 20);
    CHECK(t[4] == '-');
    CHECK(t[7] == '-');
    CHECK(t[10] == 'T');
    CHECK(t[13] == ':');
    CHECK(t[16] == ':');
    CHECK(t.back() == 'Z');
    CHECK(t.substr(0, 2) == "20");
}
