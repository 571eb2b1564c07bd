import io

import pytest

from opow.chain import (
    Block,
    ChainIndex,
    Transfer,
    Verdict,
    block_from_bytes,
    block_id,
    block_to_bytes,
    import_chain,
    make_genesis,
    transfers_commitment,
)
from opow.heavyhash import HeavyHashParams, heavyhash
from opow.pow import (
    RetargetParams,
    compact_from_target,
    meets_target,
    serialize_header,
    target_from_compact,
    work_from_target,
)

EASY_BITS = compact_from_target(1 << 253)  # ~1 in 8 headers win


@pytest.fixture()
def index():
    return ChainIndex(make_genesis(EASY_BITS, timestamp=0))


def extend(index, parent, timestamp, transfers=()):
    block = index.mine_block(parent, tuple(transfers), timestamp)
    assert block is not None
    report = index.add_block(block)
    return report


def build_chain(index, length, start_ts=600, step=600, spend_base=1000):
    tip = index.genesis_hash
    for i in range(length):
        transfers = (Transfer(1, 2, 10, spend_base + i),)
        report = extend(index, tip, start_ts + i * step, transfers)
        assert report.verdict is Verdict.VALID
        tip = report.block_hash
    return tip


# -- validation verdicts -------------------------------------------------------


def test_honest_block_is_valid(index):
    report = extend(index, index.genesis_hash, 600)
    assert report.verdict is Verdict.VALID
    assert index.tip == report.block_hash
    assert index.tip_entry().height == 1


def test_non_winning_nonce_is_bad_pow(index):
    template = index.header_template(index.genesis_hash, (), 600)
    matrix = index.matrix_for(index.genesis_hash)
    target = target_from_compact(template.compact_target)
    nonce = 0
    while meets_target(
            heavyhash(HeavyHashParams(), matrix,
                      serialize_header(template.with_nonce(nonce))), target):
        nonce += 1
    report = index.add_block(Block(template.with_nonce(nonce), ()))
    assert report.verdict is Verdict.BAD_POW


def test_wrong_target_is_bad_target(index):
    template = index.header_template(index.genesis_hash, (), 600)
    wrong = template.with_nonce(0)
    wrong = type(wrong)(wrong.version, wrong.parent_hash, wrong.payload_commitment,
                        wrong.timestamp, compact_from_target(1 << 255), 0)
    report = index.add_block(Block(wrong, ()))
    assert report.verdict is Verdict.BAD_TARGET


def test_wrong_commitment_is_bad_commitment(index):
    template = index.header_template(index.genesis_hash, (), 600)
    block = Block(template, (Transfer(1, 2, 3, 4),))  # commitment built for ()
    report = index.add_block(block)
    assert report.verdict is Verdict.BAD_COMMITMENT


def test_stale_timestamp_is_bad_timestamp(index):
    tip = build_chain(index, 12)
    block = index.mine_block(tip, (), timestamp=1)  # below median of last 11
    report = index.add_block(block)
    assert report.verdict is Verdict.BAD_TIMESTAMP


def test_spend_id_reuse_is_double_spend(index):
    tip = build_chain(index, 3, spend_base=500)
    block = index.mine_block(tip, (Transfer(7, 8, 1, 500),), timestamp=60_000)
    assert index.add_block(block).verdict is Verdict.DOUBLE_SPEND
    dup_inside = index.mine_block(
        tip, (Transfer(1, 2, 1, 900), Transfer(3, 4, 1, 900)), timestamp=60_000)
    assert index.add_block(dup_inside).verdict is Verdict.DOUBLE_SPEND


def test_orphan_pool_and_cascade(index):
    tip = build_chain(index, 2)
    child = index.mine_block(tip, (), timestamp=10_000)
    grand = None
    # build grandchild on a scratch copy so the real index never sees child
    scratch = ChainIndex(make_genesis(EASY_BITS, timestamp=0))
    build_chain(scratch, 2)
    assert scratch.tip == tip
    scratch.add_block(child)
    grand = scratch.mine_block(block_id(child), (), timestamp=10_600)

    report = index.add_block(grand)
    assert report.verdict is Verdict.ORPHAN
    assert index.tip == tip
    report = index.add_block(child)
    assert report.verdict is Verdict.VALID
    assert report.accepted_orphans == (block_id(grand),)
    assert index.tip == block_id(grand)
    assert index.tip_entry().height == 4


# -- fork choice -----------------------------------------------------------------


def test_equal_work_keeps_first_seen(index):
    tip = build_chain(index, 1)
    a = index.mine_block(tip, (Transfer(1, 1, 1, 11),), timestamp=2000)
    b = index.mine_block(tip, (Transfer(2, 2, 2, 22),), timestamp=2000)
    ra = index.add_block(a)
    rb = index.add_block(b)
    assert ra.verdict is rb.verdict is Verdict.VALID
    assert index.tip == ra.block_hash
    assert not rb.tip_changed


def test_side_chain_overtake_reports_reorg_depth_one(index):
    tip = build_chain(index, 1)
    a = index.mine_block(tip, (Transfer(1, 1, 1, 11),), timestamp=2000)
    b = index.mine_block(tip, (Transfer(2, 2, 2, 22),), timestamp=2000)
    index.add_block(a)
    index.add_block(b)
    b2 = index.mine_block(block_id(b), (), timestamp=2600)
    report = index.add_block(b2)
    assert report.tip_changed and report.reorg_depth == 1
    assert index.tip == block_id(b2)


def test_attacker_seven_vs_honest_six(index):
    fork = build_chain(index, 1)
    honest = fork
    for i in range(6):
        honest = extend(index, honest, 3000 + i * 600,
                        (Transfer(1, 2, 1, 100 + i),)).block_hash
    assert index.tip == honest

    attacker = fork
    for i in range(7):
        report = extend(index, attacker, 3300 + i * 600,
                        (Transfer(9, 9, 1, 200 + i),))
        attacker = report.block_hash
    assert index.tip == attacker
    assert report.tip_changed and report.reorg_depth == 6

    # integer cumulative-work oracle: equal targets, so work is per-block
    per_block = work_from_target(target_from_compact(EASY_BITS))
    expect = (1 + 1 + 7) * per_block  # genesis + fork block + 7 attacker blocks
    assert index.cumulative_work_of(index.tip) == expect


def test_work_strictly_increases_along_chain(index):
    build_chain(index, 8)
    works = [index.cumulative_work_of(h) for h in index.best_chain()]
    assert all(b > a for a, b in zip(works, works[1:]))


def test_arrival_order_independence(index):
    import itertools

    tip = build_chain(index, 3)
    side = index.mine_block(index.best_chain()[2], (), timestamp=90_000)
    index.add_block(side)
    final_tip = index.tip
    assert final_tip == tip  # main chain is strictly heavier

    pool = [index.entry(h).block for h in index.best_chain()[1:]] + [side]
    # the orphan pool makes every arrival order equivalent, not just
    # parent-before-child ones; work totals differ so no tie-break ambiguity
    for perm in itertools.permutations(pool):
        replayed = ChainIndex(make_genesis(EASY_BITS, timestamp=0))
        for block in perm:
            replayed.add_block(block)
        assert replayed.tip == final_tip


def test_no_accepted_chain_has_duplicate_spend_ids(index):
    build_chain(index, 10)
    seen = set()
    for h in index.best_chain():
        for t in index.entry(h).block.transfers:
            assert t.spend_id not in seen
            seen.add(t.spend_id)


# -- retarget boundary in chain context --------------------------------------------


def test_chain_retarget_boundary():
    params = RetargetParams(window=4, expected_interval=600)
    index = ChainIndex(make_genesis(EASY_BITS, timestamp=0), params=params)
    tip = index.genesis_hash
    for i in range(4):  # heights 1..4 at 2x expected pace
        tip = extend(index, tip, (i + 1) * 1200).block_hash
    template = index.header_template(tip, (), timestamp=6000)
    want = target_from_compact(compact_from_target(
        2 * target_from_compact(EASY_BITS)))
    assert target_from_compact(template.compact_target) == want
    assert extend(index, tip, 6000).verdict is Verdict.VALID


# -- serialization ------------------------------------------------------------------


def test_block_bytes_roundtrip(index):
    build_chain(index, 3)
    for h in index.best_chain():
        block = index.entry(h).block
        assert block_from_bytes(block_to_bytes(block)) == block


def test_transfers_commitment_is_sha256_of_records():
    import hashlib
    transfers = (Transfer(1, 2, 3, 4), Transfer(5, 6, 7, 8))
    raw = b"".join(
        v.to_bytes(8, "little")
        for t in transfers for v in (t.sender, t.recipient, t.amount, t.spend_id))
    assert transfers_commitment(transfers) == hashlib.sha256(raw).digest()
    assert transfers_commitment(()) == hashlib.sha256(b"").digest()


def test_export_import_roundtrip(index):
    tip = build_chain(index, 5)
    side = index.mine_block(index.best_chain()[3], (), timestamp=90_000)
    index.add_block(side)
    buf = io.BytesIO()
    count = index.export_stream(buf)
    assert count == 7  # genesis + 5 + side block
    buf.seek(0)
    rebuilt = import_chain(buf)
    assert rebuilt.tip == index.tip == tip
    assert set(rebuilt.best_chain()) == set(index.best_chain())


def test_import_rejects_tampered_stream(index):
    build_chain(index, 2)
    buf = io.BytesIO()
    index.export_stream(buf)
    raw = bytearray(buf.getvalue())
    raw[-1] ^= 0xFF  # corrupt the last transfer byte
    with pytest.raises(ValueError):
        import_chain(io.BytesIO(bytes(raw)))
