import numpy as np
import pytest

from chaincluster.ingest_btc import TxRecord


def make_btc_fixture(seed=7, n_tx=40, n_cross=4):
    """Two planted communities of five users; each user owns two addresses.

    Intra-community payments are large, cross-community ones tiny. Every
    spend uses both sender addresses as inputs (so common spend merges
    them) and returns change to the sender's second address.
    """
    rng = np.random.default_rng(seed)
    txs = []
    for t in range(n_tx):
        sender = int(rng.integers(10))
        if t < n_cross:
            receiver = (sender + 5 + int(rng.integers(5))) % 10
            if receiver // 5 == sender // 5:
                receiver = (receiver + 5) % 10
            amount = 1_000
        else:
            group = sender // 5
            receiver = group * 5 + int(rng.choice([u for u in range(5) if u != sender % 5]))
            amount = int(rng.integers(5, 50)) * 1_000_000
        inputs = [(100 * sender, amount), (100 * sender + 1, 20_000)]
        outputs = [(100 * receiver + int(rng.integers(2)), amount), (100 * sender + 1, 19_000)]
        txs.append(TxRecord(1000 + t, inputs, outputs))
    truth = {100 * u: u // 5 for u in range(10)}
    return txs, truth


def write_btc_fixture(tmp_path, txs, truth):
    from chaincluster.ingest_btc import format_tx_files
    txin, txout = format_tx_files(txs)
    (tmp_path / "txin.txt").write_text(txin)
    (tmp_path / "txout.txt").write_text(txout)
    (tmp_path / "truth.txt").write_text("".join(f"{k} {v}\n" for k, v in sorted(truth.items())))
    return tmp_path


def make_eth_fixture(seed=3, users_per_group=10, tokens_per_group=4):
    """Two user groups holding disjoint token sets, as CSV text."""
    rng = np.random.default_rng(seed)
    users = [f"0x{i:040x}" for i in range(2 * users_per_group)]
    tokens = [f"0x{(0xa0 + j):040x}" for j in range(2 * tokens_per_group)]
    rows = ["user,token,amount"]
    for i, u in enumerate(users):
        g = i // users_per_group
        for j in range(g * tokens_per_group, (g + 1) * tokens_per_group):
            rows.append(f"{u},{tokens[j]},{rng.integers(1, 1000)}.{rng.integers(0, 100):02d}")
    prices = ["token,eth_price"] + [f"{t},{0.001 * (j + 1):.4f}" for j, t in enumerate(tokens)]
    user_truth = {u: i // users_per_group for i, u in enumerate(users)}
    token_truth = {t: j // tokens_per_group for j, t in enumerate(tokens)}
    return "\n".join(rows) + "\n", "\n".join(prices) + "\n", user_truth, token_truth


@pytest.fixture
def btc_dir(tmp_path):
    txs, truth = make_btc_fixture()
    return write_btc_fixture(tmp_path, txs, truth)


@pytest.fixture
def eth_dir(tmp_path):
    holdings, prices, user_truth, token_truth = make_eth_fixture()
    (tmp_path / "holdings.csv").write_text(holdings)
    (tmp_path / "prices.csv").write_text(prices)
    (tmp_path / "users_truth.csv").write_text(
        "id,label\n" + "".join(f"{k},{v}\n" for k, v in user_truth.items()))
    (tmp_path / "tokens_truth.csv").write_text(
        "id,label\n" + "".join(f"{k},{v}\n" for k, v in token_truth.items()))
    return tmp_path


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
