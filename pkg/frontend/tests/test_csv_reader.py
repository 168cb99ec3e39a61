import pytest

from plot_emitter.reader import (RISK_COLUMNS, EmptySelectionError,
                                 SchemaError, read_risk_tables, read_table)


def test_read_risk_table(f2_csv):
    table = read_table(f2_csv, RISK_COLUMNS)
    assert table.columns == RISK_COLUMNS
    assert len(table.rows) == 9
    row = table.rows[0]
    assert row["method"] == "transformer"
    assert row["context_length"] == 16
    assert row["risk_mean"] == pytest.approx(1.2)
    assert isinstance(row["d"], int)


def test_missing_column_is_named(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("config_hash,seed,method\nx,0,krr\n")
    with pytest.raises(SchemaError, match="missing column 'd'"):
        read_table(path, RISK_COLUMNS)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(SchemaError, match="empty"):
        read_table(path, RISK_COLUMNS)


def test_ragged_row_rejected(tmp_path, f2_csv):
    text = f2_csv.read_text().splitlines()
    text.append("too,short")
    path = tmp_path / "ragged.csv"
    path.write_text("\n".join(text) + "\n")
    with pytest.raises(SchemaError, match="fields"):
        read_table(path, RISK_COLUMNS)


def test_filtering_and_distinct(f2_csv):
    table = read_table(f2_csv, RISK_COLUMNS)
    krr = table.filtered(method="krr")
    assert len(krr.rows) == 3
    assert set(krr.column("context_length")) == {16, 32, 64}
    assert table.distinct("method") == ["transformer", "krr", "nn_one_step"]
    assert table.filtered(method="nope").rows == ()


def test_multi_file_concatenation(f2_csv, sweep_csv):
    table = read_risk_tables([f2_csv, sweep_csv])
    assert len(table.rows) == 9 + 8
    assert sorted(set(table.column("d"))) == [16, 32]
