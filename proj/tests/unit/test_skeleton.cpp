#include <fstream>
#include <algorithm>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tsgcn/archive.hpp"
#include "tsgcn/skeleton.hpp"

using namespace tsgcn;

namespace {

JointLayout chain_layout(std::size_t n) {
  JointLayout l{"chain" + std::to_string(n), n, {}, 0};
  for (std::size_t v = 1; v < n; ++v) l.edges.emplace_back(v - 1, v);
  return l;
}

SkeletonSequence make_sequence(std::size_t frames, std::size_t joints, std::size_t label = 0,
                               std::size_t dims = 2) {
  SkeletonSequence s{"s", label, {}, "chain"};
  for (std::size_t f = 0; f < frames; ++f) {
    SkeletonFrame fr{Tensor({joints, dims}), true};
    for (std::size_t v = 0; v < joints; ++v)
      for (std::size_t d = 0; d < dims; ++d) fr.coords(v, d) = static_cast<double>(100 * f + 10 * v + d);
    s.frames.push_back(std::move(fr));
  }
  return s;
}

std::string joints_json(std::size_t n) {
  std::string s = "[";
  for (std::size_t v = 0; v < n; ++v) s += (v ? "," : "") + std::string("[") + std::to_string(v) + ".5, 1]";
  return s + "]";
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_SUITE("skeleton") {
  TEST_CASE("built-in layouts are valid and connected") {
    for (const auto& l : {coco18_layout(), kinect20_layout()}) {
      CHECK_NOTHROW(l.validate());
      CHECK(l.connected());
      CHECK(l.edges.size() == l.joint_count - 1);
    }
    CHECK(coco18_layout().joint_count == 18);
    CHECK(kinect20_layout().joint_count == 20);
  }

  TEST_CASE("shipped layout files parse equal to the built-ins") {
    const std::filesystem::path dir = TSGCN_LAYOUT_DIR;
    for (const auto& [file, builtin] : {std::pair{"coco18.layout", coco18_layout()},
                                        std::pair{"kinect20.layout", kinect20_layout()}}) {
      const auto l = load_layout_file(dir / file);
      CHECK(l.name == builtin.name);
      CHECK(l.joint_count == builtin.joint_count);
      CHECK(l.root_joint == builtin.root_joint);
      CHECK(l.edges == builtin.edges);
    }
  }

  TEST_CASE("layout text round trip and validation errors") {
    std::stringstream ss;
    write_layout(ss, kinect20_layout());
    const auto back = parse_layout(ss, "mem");
    CHECK(back.edges == kinect20_layout().edges);

    auto bad = [](const std::string& text) {
      std::istringstream is(text);
      return parse_layout(is, "bad.layout");
    };
    CHECK_THROWS_AS(bad("name x\njoints 3\nroot 0\nedge 0 3\nedge 0 1\n"), std::exception);
    CHECK_THROWS_AS(bad("name x\njoints 3\nroot 0\nedge 1 1\nedge 0 2\n"), std::exception);
    CHECK_THROWS_AS(bad("name x\njoints 3\nroot 0\nedge 0 1\nedge 1 0\nedge 1 2\n"), std::exception);
    CHECK_THROWS_AS(bad("name x\njoints 3\nroot 0\nedge 0 1\n"), std::exception);  // disconnected
    CHECK_THROWS_AS(bad("name x\njoints 3\nroot 5\nedge 0 1\nedge 1 2\n"), std::exception);
    CHECK_THROWS_AS(bad("joints 3\nfrobnicate 2\n"), IngestError);
  }

  TEST_CASE("load_sequences: 2 files, 3 frames each") {
    const auto dir = testing::scratch_dir("load2");
    const std::string frame = joints_json(3);
    write_file(dir / "a.jsonl", R"({"id":"a1","label":"fall","frames":[)" + frame + "," + frame + "," + frame + "]}\n");
    write_file(dir / "b.jsonl", R"({"id":"b1","label":"walk","frames":[)" + frame + "," + frame +
                                    R"(,{"joints":)" + frame + R"(,"valid":false}]})" + "\n");
    write_file(dir / "m.csv", "path,label,id\na.jsonl,fall,a1\nb.jsonl,walk,b1\n");
    const auto m = load_manifest(dir / "m.csv");
    CHECK(m.class_names == std::vector<std::string>{"fall", "walk"});
    const auto seqs = load_sequences(m, chain_layout(3));
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].frames.size() == 3);
    CHECK(seqs[1].frames.size() == 3);
    CHECK(seqs[1].label == 1);
    CHECK_FALSE(seqs[1].frames[2].valid);
    CHECK(seqs[0].frames[1].coords(2, 0) == 2.5);
  }

  TEST_CASE("joint-count mismatch names the frame, file and line") {
    const auto dir = testing::scratch_dir("badjoints");
    write_file(dir / "a.jsonl", "\n" R"({"id":"a1","label":"fall","frames":[)" + joints_json(18) + "," +
                                    joints_json(17) + "]}\n");
    write_file(dir / "m.csv", "path,label,id\na.jsonl,fall,a1\n");
    try {
      load_sequences(load_manifest(dir / "m.csv"), coco18_layout());
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("a.jsonl:2") != std::string::npos);
      CHECK(msg.find("frame 1 has 17 joints") != std::string::npos);
    }
  }

  TEST_CASE("missing file and malformed records are reported") {
    const auto dir = testing::scratch_dir("badfiles");
    write_file(dir / "m.csv", "path,label,id\nmissing.jsonl,fall,x\n");
    try {
      load_sequences(load_manifest(dir / "m.csv"), chain_layout(2));
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(std::string(e.what()).find("missing.jsonl") != std::string::npos);
    }
    write_file(dir / "bad.jsonl", "{\"id\": \"x\", \"label\": \"fall\", \"frames\": [\n");
    write_file(dir / "m2.csv", "path,label,id\nbad.jsonl,fall,x\n");
    CHECK_THROWS_AS(load_sequences(load_manifest(dir / "m2.csv"), chain_layout(2)), IngestError);
    write_file(dir / "extra.jsonl", R"({"id":"x","label":"fall","frames":[],"fps":30})" "\n");
    write_file(dir / "m3.csv", "path,label,id\nextra.jsonl,fall,x\n");
    CHECK_THROWS_WITH_AS(load_sequences(load_manifest(dir / "m3.csv"), chain_layout(2)),
                         doctest::Contains("unknown field 'fps'"), IngestError);
    write_file(dir / "m4.csv", "path,label,id\nextra.jsonl,walk,x\n");
    std::istringstream dup("path,label,id\na,x,1\nb,y,1\n");
    CHECK_THROWS_AS(parse_manifest(dup, dir), IngestError);
    std::istringstream noheader("a,x,1\n");
    CHECK_THROWS_AS(parse_manifest(noheader, dir), IngestError);
  }

  TEST_CASE("empty manifest gives no sequences") {
    std::istringstream is("path,label,id\n");
    const auto m = parse_manifest(is, ".");
    CHECK(load_sequences(m, coco18_layout()).empty());
  }

  TEST_CASE("sequence record round trip") {
    auto seq = make_sequence(4, 3, 1, 3);
    seq.id = "rt";
    seq.frames[2].valid = false;
    const std::vector<std::string> names{"a", "b"};
    const auto line = format_sequence_record(seq, names);
    const auto back = parse_sequence_record(line, chain_layout(3), "mem");
    CHECK(back.id == "rt");
    REQUIRE(back.frames.size() == 4);
    CHECK_FALSE(back.frames[2].valid);
    for (std::size_t f = 0; f < 4; ++f) CHECK(testing::bit_equal(back.frames[f].coords, seq.frames[f].coords));
  }

  TEST_CASE("drop_invalid_frames") {
    auto seq = make_sequence(10, 2);
    for (std::size_t f : {1, 4, 8}) seq.frames[f].valid = false;
    const auto kept = drop_invalid_frames(seq);
    REQUIRE(kept.frames.size() == 7);
    CHECK(kept.frames[1].coords(0, 0) == 200.0);
    CHECK(kept.label == seq.label);

    const auto all_valid = make_sequence(5, 2);
    CHECK(drop_invalid_frames(all_valid).frames.size() == 5);
  }

  TEST_CASE("frame counts mirroring the ImViA row of the frame-extraction table") {
    SkeletonSequence seq{"imvia", 0, {}, "coco18"};
    seq.frames.resize(42066, SkeletonFrame{Tensor({1, 2}), true});
    std::mt19937_64 rng(2);
    std::vector<std::size_t> idx(seq.frames.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t i = 0; i < 1435; ++i) seq.frames[idx[i]].valid = false;
    CHECK(drop_invalid_frames(seq).frames.size() == 40631);
  }

  TEST_CASE("window_sequence examples") {
    auto s100 = make_sequence(100, 2, 1);
    auto clips = window_sequence(s100, 64, 32);
    REQUIRE(clips.size() == 2);
    CHECK(clips[0].start_frame == 0);
    CHECK(clips[1].start_frame == 32);
    CHECK(clips[1].label == 1);
    CHECK(clips[1].data.shape() == Shape{2, 64, 2});
    CHECK(clips[1].data(0, 0, 0) == 3200.0);

    CHECK(window_sequence(make_sequence(64, 2), 64, 32).size() == 1);

    auto short_clip = window_sequence(make_sequence(10, 2), 64, 32);
    REQUIRE(short_clip.size() == 1);
    for (std::size_t t = 10; t < 64; ++t)
      for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t d = 0; d < 2; ++d) CHECK(short_clip[0].data(d, t, v) == short_clip[0].data(d, 9, v));

    CHECK_THROWS(window_sequence(SkeletonSequence{}, 8, 4));
    CHECK_THROWS(window_sequence(make_sequence(5, 2), 1, 1));
    CHECK_THROWS(window_sequence(make_sequence(5, 2), 4, 0));
  }

  TEST_CASE("window count property sweep") {
    for (std::size_t L = 1; L <= 40; ++L)
      for (std::size_t clip = 2; clip <= 12; ++clip)
        for (std::size_t stride = 1; stride <= 7; ++stride) {
          const std::size_t expected = L >= clip ? (L - clip) / stride + 1 : 1;
          const auto clips = window_sequence(make_sequence(L, 1), clip, stride);
          REQUIRE(clips.size() == expected);
          for (const auto& c : clips) CHECK(c.data.dim(1) == clip);
        }
  }

  TEST_CASE("normalize_clip examples") {
    const auto layout = chain_layout(2);
    SkeletonClip c{Tensor({2, 1, 2}), 3, "x", 0};
    c.data(0, 0, 0) = 5; c.data(1, 0, 0) = 5;  // root (5, 5)
    c.data(0, 0, 1) = 6; c.data(1, 0, 1) = 5;  // joint (6, 5)
    const auto n = normalize_clip(c, layout);
    CHECK(n.data(0, 0, 0) == 0.0);
    CHECK(n.data(1, 0, 0) == 0.0);
    CHECK(n.data(0, 0, 1) == 1.0);
    CHECK(n.data(1, 0, 1) == 0.0);
    CHECK(n.label == 3);

    SkeletonClip same{Tensor({2, 2, 2}, 4.0), 0, "y", 0};
    CHECK(normalize_clip(same, layout).data == Tensor({2, 2, 2}, 0.0));
  }

  TEST_CASE("normalize_clip is idempotent") {
    std::mt19937_64 rng(17);
    const auto layout = coco18_layout();
    for (int trial = 0; trial < 20; ++trial) {
      SkeletonClip c{testing::random_tensor({3, 5, 18}, rng, -100, 100), 0, "r", 0};
      const auto once = normalize_clip(c, layout);
      const auto twice = normalize_clip(once, layout);
      CHECK(testing::max_abs_diff(once.data, twice.data) <= 1e-12);
      CHECK(once.data.all_finite());
    }
  }

  TEST_CASE("split_dataset: 50/50 at 0.9 with seed 7") {
    std::vector<SkeletonClip> clips;
    for (std::size_t i = 0; i < 100; ++i) clips.push_back({Tensor({1, 2, 1}, double(i)), i % 2, std::to_string(i), 0});
    const auto a = split_dataset(clips, 0.9, 7);
    CHECK(a.train.size() == 90);
    CHECK(a.test.size() == 10);
    std::map<std::size_t, int> per_class;
    for (const auto& c : a.test) ++per_class[c.label];
    CHECK(per_class[0] == 5);
    CHECK(per_class[1] == 5);

    const auto b = split_dataset(clips, 0.9, 7);
    REQUIRE(b.test.size() == a.test.size());
    for (std::size_t i = 0; i < a.test.size(); ++i) CHECK(a.test[i].sequence_id == b.test[i].sequence_id);

    std::multiset<std::string> all, seen;
    for (const auto& c : clips) all.insert(c.sequence_id);
    for (const auto* side : {&a.train, &a.test})
      for (const auto& c : *side) seen.insert(c.sequence_id);
    CHECK(all == seen);
    std::set<std::string> train_ids;
    for (const auto& c : a.train) train_ids.insert(c.sequence_id);
    for (const auto& c : a.test) CHECK(train_ids.count(c.sequence_id) == 0);
  }

  TEST_CASE("split_dataset: six classes keep 90/10 per class") {
    std::vector<SkeletonClip> clips;
    for (std::size_t k = 0; k < 6; ++k)
      for (std::size_t i = 0; i < 20; ++i) clips.push_back({Tensor({1, 2, 1}), k, std::to_string(k * 100 + i), 0});
    const auto s = split_dataset(clips, 0.9, 1);
    std::map<std::size_t, int> train, test;
    for (const auto& c : s.train) ++train[c.label];
    for (const auto& c : s.test) ++test[c.label];
    for (std::size_t k = 0; k < 6; ++k) {
      CHECK(train[k] == 18);
      CHECK(test[k] == 2);
    }
  }

  TEST_CASE("split_dataset: class with a single clip is an error naming it") {
    std::vector<SkeletonClip> clips{{Tensor({1, 2, 1}), 0, "a", 0}, {Tensor({1, 2, 1}), 0, "b", 0},
                                    {Tensor({1, 2, 1}), 1, "c", 0}};
    const std::vector<std::string> names{"walk", "fall"};
    CHECK_THROWS_WITH(split_dataset(clips, 0.5, 0, names), doctest::Contains("fall"));
  }

  TEST_CASE("archive round trip") {
    const auto dir = testing::scratch_dir("archive");
    std::mt19937_64 rng(3);
    ClipArchive a;
    a.layout = coco18_layout();
    a.dims = 2;
    a.clip_len = 4;
    a.class_names = {"fall", "gait"};
    a.train.push_back({testing::random_tensor({2, 4, 18}, rng), 1, "s1", 8});
    a.test.push_back({testing::random_tensor({2, 4, 18}, rng), 0, "s2", 0});
    save_archive(dir / "a.tsgc", a);
    const auto b = load_archive(dir / "a.tsgc");
    CHECK(b.layout.edges == a.layout.edges);
    CHECK(b.class_names == a.class_names);
    REQUIRE(b.train.size() == 1);
    CHECK(b.train[0].start_frame == 8);
    CHECK(b.train[0].sequence_id == "s1");
    CHECK(testing::bit_equal(b.test[0].data, a.test[0].data));
  }
}
