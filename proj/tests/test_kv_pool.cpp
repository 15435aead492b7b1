#include <doctest.h>

#include <numeric>

#include "selattn/kv_pool.hpp"
#include "selattn/rng.hpp"

using namespace selattn;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (float& x : m.data) x = static_cast<float>(rng.normal());
  return m;
}

}  // namespace

TEST_CASE("create, append ranges, logical length") {
  PagedKvPool pool(1024, 1, 2, 4);
  SequenceHandle seq = pool.create_sequence();
  CHECK(pool.logical_len(seq) == 0);

  SequenceHandle other = pool.create_sequence();
  CHECK(seq.seq_id != other.seq_id);

  Matrix k1 = random_matrix(1, 8, 1);
  Matrix v1 = random_matrix(1, 8, 2);
  auto [b0, e0] = pool.append_kv(seq, k1, v1);
  CHECK(b0 == 0);
  CHECK(e0 == 1);

  Matrix k512 = random_matrix(512, 8, 3);
  Matrix v512 = random_matrix(512, 8, 4);
  auto [b1, e1] = pool.append_kv(seq, k512, v512);
  CHECK(b1 == 1);
  CHECK(e1 == 513);
  CHECK(pool.logical_len(seq) == 513);
}

TEST_CASE("gather matches a flat shadow copy under a shuffled allocator") {
  PagedKvPool pool(256, 1, 2, 8);
  pool.shuffle_free_frames(99);
  SequenceHandle seq = pool.create_sequence();

  Matrix k_all = random_matrix(200, 16, 5);
  Matrix v_all = random_matrix(200, 16, 6);
  pool.append_kv(seq, k_all, v_all);

  SUBCASE("full gather is bit-exact") {
    IndexList all(200);
    std::iota(all.begin(), all.end(), TokenIndex{0});
    auto [k_got, v_got] = pool.gather(seq, all);
    CHECK(k_got.data == k_all.data);
    CHECK(v_got.data == v_all.data);
  }

  SUBCASE("random subsets match the shadow rows") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
      IndexList idx;
      for (TokenIndex i = 0; i < 200; ++i) {
        if (rng.uniform() < 0.3) idx.push_back(i);
      }
      auto [k_got, v_got] = pool.gather(seq, idx);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        CHECK(std::equal(k_got.row_ptr(j), k_got.row_ptr(j) + 16, k_all.row_ptr(idx[j])));
        CHECK(std::equal(v_got.row_ptr(j), v_got.row_ptr(j) + 16, v_all.row_ptr(idx[j])));
      }
    }
  }

  SUBCASE("empty gather") {
    auto [k_got, v_got] = pool.gather(seq, IndexList{});
    CHECK(k_got.rows == 0);
    CHECK(v_got.rows == 0);
  }
}

TEST_CASE("gather names the offending index") {
  PagedKvPool pool(16, 1, 1, 4);
  SequenceHandle seq = pool.create_sequence();
  pool.append_kv(seq, random_matrix(4, 4, 8), random_matrix(4, 4, 9));
  CHECK_THROWS_WITH_AS(static_cast<void>(pool.gather(seq, IndexList{2, 7})),
                       doctest::Contains("index 7"), std::out_of_range);
}

TEST_CASE("capacity errors leave state unchanged, frames recycle") {
  PagedKvPool pool(8, 1, 1, 4);
  SequenceHandle seq = pool.create_sequence();
  pool.append_kv(seq, random_matrix(6, 4, 10), random_matrix(6, 4, 11));
  CHECK(pool.free_frames() == 2);

  // no partial append
  CHECK_THROWS_AS(pool.append_kv(seq, random_matrix(3, 4, 12), random_matrix(3, 4, 13)),
                  capacity_error);
  CHECK(pool.logical_len(seq) == 6);
  CHECK(pool.free_frames() == 2);
  CHECK(pool.free_frames() + 6 == pool.total_frames());

  // fill up, release, allocate again
  pool.append_kv(seq, random_matrix(2, 4, 14), random_matrix(2, 4, 15));
  CHECK(pool.free_frames() == 0);
  pool.release(seq);
  CHECK(pool.free_frames() == pool.total_frames());
  SequenceHandle fresh = pool.create_sequence();
  pool.append_kv(fresh, random_matrix(8, 4, 16), random_matrix(8, 4, 17));
  CHECK(pool.logical_len(fresh) == 8);
}

TEST_CASE("release semantics") {
  PagedKvPool pool(8, 1, 1, 4);
  SequenceHandle seq = pool.create_sequence();
  pool.release(seq);  // empty release is fine
  CHECK_THROWS_AS(pool.release(seq), std::invalid_argument);
  CHECK_THROWS_AS(pool.logical_len(seq), std::invalid_argument);
}

TEST_CASE("interleaved sequences never alias frames") {
  PagedKvPool pool(64, 1, 1, 4);
  SequenceHandle a = pool.create_sequence();
  SequenceHandle b = pool.create_sequence();
  Matrix ka = random_matrix(20, 4, 18);
  Matrix va = random_matrix(20, 4, 19);
  Matrix kb = random_matrix(20, 4, 20);
  Matrix vb = random_matrix(20, 4, 21);
  pool.append_kv(a, ka, va);
  pool.append_kv(b, kb, vb);
  pool.release(a);

  SequenceHandle c = pool.create_sequence();
  Matrix kc = random_matrix(30, 4, 22);
  Matrix vc = random_matrix(30, 4, 23);
  pool.append_kv(c, kc, vc);

  IndexList all20(20);
  std::iota(all20.begin(), all20.end(), TokenIndex{0});
  auto [kb_got, vb_got] = pool.gather(b, all20);
  CHECK(kb_got.data == kb.data);
  CHECK(vb_got.data == vb.data);

  IndexList all30(30);
  std::iota(all30.begin(), all30.end(), TokenIndex{0});
  auto [kc_got, vc_got] = pool.gather(c, all30);
  CHECK(kc_got.data == kc.data);
  CHECK(vc_got.data == vc.data);
}

TEST_CASE("frame conservation holds through a random workload") {
  PagedKvPool pool(128, 1, 2, 4);
  Rng rng(24);
  std::vector<SequenceHandle> live;
  for (int step = 0; step < 200; ++step) {
    const double p = rng.uniform();
    if (p < 0.4 || live.empty()) {
      live.push_back(pool.create_sequence());
    } else if (p < 0.8) {
      SequenceHandle seq = live[rng.index(live.size())];
      const std::size_t t = 1 + rng.index(8);
      try {
        pool.append_kv(seq, random_matrix(t, 8, rng.next_u64()),
                       random_matrix(t, 8, rng.next_u64()));
      } catch (const capacity_error&) {
      }
    } else {
      const std::size_t i = rng.index(live.size());
      pool.release(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    }
    std::size_t allocated = 0;
    for (SequenceHandle seq : live) {
      allocated += (pool.logical_len(seq) + pool.page_size() - 1) / pool.page_size();
    }
    CHECK(allocated + pool.free_frames() == pool.total_frames());
  }
}

TEST_CASE("multi-token pages address rows correctly") {
  PagedKvPool pool(64, 4, 1, 4);
  CHECK(pool.total_frames() == 16);
  SequenceHandle seq = pool.create_sequence();
  Matrix k = random_matrix(10, 4, 25);
  Matrix v = random_matrix(10, 4, 26);
  pool.append_kv(seq, k, v);
  CHECK(pool.free_frames() == 16 - 3);  // ceil(10 / 4) frames in use
  IndexList all(10);
  std::iota(all.begin(), all.end(), TokenIndex{0});
  auto [k_got, v_got] = pool.gather(seq, all);
  CHECK(k_got.data == k.data);
  CHECK(v_got.data == v.data);
}

TEST_CASE("page table debug dump") {
  PagedKvPool pool(8, 1, 1, 2);
  SequenceHandle seq = pool.create_sequence();
  pool.append_kv(seq, random_matrix(3, 2, 27), random_matrix(3, 2, 28));
  const std::string dump = pool.page_table_json(seq);
  CHECK(dump.find("\"seq_id\"") != std::string::npos);
  CHECK(dump.find("\"logical_len\":3") != std::string::npos);
  CHECK(dump.find("\"frames\"") != std::string::npos);
}
