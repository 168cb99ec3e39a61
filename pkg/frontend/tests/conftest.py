import pytest

RISK_HEADER = ("config_hash,seed,method,d,r,Q,P,m,context_length,"
               "risk_mean,risk_stderr,excess_risk,wall_ms")


def _risk_rows(method, d, values, m=16, seed=7):
    rows = []
    for n, mean, se in values:
        rows.append(f"abc123def456,{seed},{method},{d},2,2,2,{m},{n},"
                    f"{mean},{se},{mean},{12.5}")
    return rows


@pytest.fixture()
def f2_csv(tmp_path):
    lines = [RISK_HEADER]
    lines += _risk_rows("transformer", 32, [(16, 1.2, 0.05), (32, 0.9, 0.04),
                                            (64, 0.7, 0.03)])
    lines += _risk_rows("krr", 32, [(16, 1.0, 0.02), (32, 0.98, 0.02),
                                    (64, 0.95, 0.02)], m=0)
    lines += _risk_rows("nn_one_step", 32, [(16, 1.1, 0.02), (32, 1.05, 0.02),
                                            (64, 0.9, 0.02)])
    path = tmp_path / "f2.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def sweep_csv(tmp_path):
    lines = [RISK_HEADER]
    for d, offset in ((16, 0.0), (32, 0.05)):
        lines += _risk_rows("transformer", d,
                            [(16, 1.2 + offset, 0.05), (64, 0.7 + offset, 0.03)])
        lines += _risk_rows("krr", d,
                            [(16, 1.0 + 2 * offset, 0.02),
                             (64, 0.9 + 2 * offset, 0.02)], m=0)
    path = tmp_path / "sweep.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def alignment_csv(tmp_path):
    lines = ["neuron,mass_ratio,cosine,baseline"]
    for j in range(50):
        ratio = (j % 10) / 10.0 + 0.05
        lines.append(f"{j},{ratio},{ratio**0.5},0.0625")
    path = tmp_path / "alignment.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def concentration_csv(tmp_path):
    lines = ["context_length,abs_error_mean,abs_error_stderr"]
    for k in range(6, 12):
        n = 2**k
        lines.append(f"{n},{1.0 / n**0.5},{0.1 / n**0.5}")
    path = tmp_path / "concentration.csv"
    path.write_text("\n".join(lines) + "\n")
    return path
