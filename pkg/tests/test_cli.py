import json
import subprocess
import sys

import numpy as np
import pytest

from partialiso import build_model_tuple, truncated_shift
from partialiso.documents import (
    dumps_canonical,
    matrix_to_json,
    model_spec_document,
    tuple_document,
)
from partialiso.operators import ModelSpec, random_model_spec
from conftest import non_power_partial_isometry_3d, single_op_tuple


def run_cli(*args, **kwargs):
    return subprocess.run(
        [sys.executable, "-m", "partialiso", *args],
        capture_output=True,
        text=True,
        **kwargs,
    )


def run_json(*args):
    proc = run_cli(*args)
    assert proc.stdout, proc.stderr
    return proc.returncode, json.loads(proc.stdout)


@pytest.fixture(scope="module")
def pair_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("docs") / "pair.json"
    proc = run_cli("generate", "--preset", "example43", "--p", "2",
                   "--lambda", "0,1", "--output", str(path))
    assert proc.returncode == 0, proc.stderr
    return path


@pytest.fixture(scope="module")
def scrambled_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("docs") / "scrambled.json"
    proc = run_cli("generate", "--preset", "example43", "--p", "2",
                   "--lambda", "0,1", "--scramble", "--seed", "7",
                   "--output", str(path))
    assert proc.returncode == 0, proc.stderr
    return path


class TestGenerate:
    def test_preset_document_verifies(self, pair_file):
        code, report = run_json("verify", str(pair_file))
        assert code == 0
        assert report["pass"] is True

    def test_preset_shape(self, pair_file):
        doc = json.loads(pair_file.read_text())
        assert doc["dim"] == 8
        assert len(doc["operators"]) == 2
        assert doc["metadata"]["preset"] == "example43"

    def test_order_one_preset_is_all_zero(self, tmp_path):
        path = tmp_path / "p1.json"
        proc = run_cli("generate", "--preset", "example43", "--p", "1",
                       "--lambda", "1,0", "--output", str(path))
        assert proc.returncode == 0
        doc = json.loads(path.read_text())
        for op in doc["operators"]:
            flat = np.array(op["matrix"], dtype=float)
            assert np.abs(flat).max() == 0.0

    def test_spec_file_generation(self, tmp_path):
        spec = random_model_spec(3, n_ops=2)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(dumps_canonical(model_spec_document(spec)))
        out = tmp_path / "tuple.json"
        proc = run_cli("generate", "--spec", str(spec_path), "--scramble",
                       "--seed", "5", "--output", str(out))
        assert proc.returncode == 0, proc.stderr
        code, report = run_json("verify", str(out))
        assert code == 0 and report["pass"]

    def test_relation_violation_exits_2(self, tmp_path):
        bad = ModelSpec(
            slot_kinds=[2, "u"],
            aux_dim=2,
            twist_data={(1, 2): np.diag([1.0, -1.0])},
            slot_unitaries={2: np.array([[0.0, 1.0], [1.0, 0.0]])},
        )
        spec_path = tmp_path / "bad_spec.json"
        spec_path.write_text(dumps_canonical(model_spec_document(bad)))
        proc = run_cli("generate", "--spec", str(spec_path))
        assert proc.returncode == 2
        assert "relation" in proc.stderr

    def test_non_unimodular_lambda_exits_2(self):
        proc = run_cli("generate", "--preset", "example43", "--lambda", "0.5,0")
        assert proc.returncode == 2

    def test_unknown_preset_exits_2(self):
        proc = run_cli("generate", "--preset", "nope")
        assert proc.returncode == 2


class TestVerify:
    def test_perturbed_twist_fails_with_named_residual(self, pair_file, tmp_path):
        doc = json.loads(pair_file.read_text())
        doc["twists"][0]["matrix"][0][0] = [2.0, 0.0]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        code, report = run_json("verify", str(bad))
        assert code == 1
        assert report["pass"] is False
        assert report["worst"]["kind"] in {"twist-unitary", "star-cross", "plain-cross"}
        assert report["worst"]["value"] > 1e-3

    def test_empty_operator_list_is_schema_error(self, tmp_path):
        bad = tmp_path / "empty.json"
        bad.write_text('{"schema_version":"1","dim":1,"operators":[]}')
        proc = run_cli("verify", str(bad))
        assert proc.returncode == 2

    def test_jobs_flag_accepted(self, pair_file):
        code, report = run_json("verify", str(pair_file), "--jobs", "4")
        assert code == 0 and report["pass"]

    def test_loose_tolerance_accepts_perturbed_input(self, pair_file, tmp_path):
        doc = json.loads(pair_file.read_text())
        doc["operators"][0]["matrix"][0][0] = [1e-6, 0.0]
        noisy = tmp_path / "noisy.json"
        noisy.write_text(json.dumps(doc))
        assert run_cli("verify", str(noisy)).returncode == 1
        code, report = run_json("verify", str(noisy), "--tol", "1e-3")
        assert code == 0 and report["pass"]
        code, report = run_json("decompose", str(noisy), "--tol", "1e-3")
        assert code == 0
        assert report["residual"] <= 1e-3


class TestHw:
    def test_shift_plus_fixed_point(self, tmp_path):
        from scipy.linalg import block_diag

        v = block_diag(truncated_shift(2), np.eye(1)).astype(complex)
        path = tmp_path / "jplus.json"
        path.write_text(dumps_canonical(tuple_document(single_op_tuple(v))))
        code, report = run_json("hw", str(path))
        assert code == 0
        assert report["unitary_dim"] == 1
        assert report["blocks"] == [{"p": 2, "mult": 1}]

    def test_unitary_document(self, tmp_path):
        v = np.diag(np.exp(1j * np.arange(3)))
        path = tmp_path / "u.json"
        path.write_text(dumps_canonical(tuple_document(single_op_tuple(v))))
        code, report = run_json("hw", str(path))
        assert code == 0
        assert report["unitary_dim"] == 3
        assert report["blocks"] == []

    def test_non_ppi_exits_1_with_first_failing_power(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(
            dumps_canonical(tuple_document(single_op_tuple(non_power_partial_isometry_3d())))
        )
        code, report = run_json("hw", str(path))
        assert code == 1
        assert report["first_failing_power"] == 2

    def test_op_selection(self, pair_file):
        code, report = run_json("hw", str(pair_file), "--op", "V2")
        assert code == 0
        assert report["operator"] == "V2"

    def test_missing_op_name_is_schema_error(self, pair_file):
        proc = run_cli("hw", str(pair_file), "--op", "nope")
        assert proc.returncode == 2

    def test_emit_intertwiner(self, pair_file):
        code, report = run_json("hw", str(pair_file), "--op", "V1", "--emit-intertwiner")
        assert code == 0
        assert len(report["intertwiner"]) == 8


class TestDecompose:
    def test_scrambled_preset(self, scrambled_file):
        code, report = run_json("decompose", str(scrambled_file))
        assert code == 0
        assert report["pass"] is True
        assert report["residual"] <= 1e-9
        assert [leaf["multiindex"] for leaf in report["leaves"]] == [[2, 2]]
        assert report["leaves"][0]["mult_dim"] == 2

    def test_single_operator_matches_hw(self, tmp_path):
        from scipy.linalg import block_diag

        v = block_diag(truncated_shift(2), np.eye(1)).astype(complex)
        path = tmp_path / "single.json"
        path.write_text(dumps_canonical(tuple_document(single_op_tuple(v))))
        _, hw_report = run_json("hw", str(path))
        _, dec_report = run_json("decompose", str(path))
        leaves = {tuple(l["multiindex"]): l["mult_dim"] for l in dec_report["leaves"]}
        expected = {(b["p"],): b["mult"] for b in hw_report["blocks"]}
        expected[("u",)] = hw_report["unitary_dim"]
        assert leaves == expected

    def test_partition_reported(self, scrambled_file):
        _, report = run_json("decompose", str(scrambled_file))
        assert report["partition"]["global"] == {"1": 2, "2": 2}
        assert report["partition"]["classes"] == {"p=2": [1, 2]}

    def test_invalid_tuple_exits_1(self, pair_file, tmp_path):
        doc = json.loads(pair_file.read_text())
        doc["operators"][0]["matrix"][0][0] = [0.7, 0.0]
        bad = tmp_path / "invalid.json"
        bad.write_text(json.dumps(doc))
        code, report = run_json("decompose", str(bad))
        assert code == 1
        assert report["stage"] == "verify"


class TestDirectSumReport:
    def test_two_leaves_with_per_leaf_partitions(self, tmp_path):
        from partialiso import conjugate_tuple, direct_sum_tuples, haar_unitary

        t1 = build_model_tuple(ModelSpec(slot_kinds=[2, 2], aux_dim=1,
                                         twist_data={(1, 2): [[1j]]}))
        t2 = build_model_tuple(ModelSpec(slot_kinds=["u", 3], aux_dim=1,
                                         slot_unitaries={1: [[np.exp(0.8j)]]}))
        both = conjugate_tuple(direct_sum_tuples(t1, t2),
                               haar_unitary(t1.dim + t2.dim, 2))
        path = tmp_path / "sum.json"
        path.write_text(dumps_canonical(tuple_document(both)))
        code, report = run_json("decompose", str(path))
        assert code == 0
        assert len(report["leaves"]) == 2
        assert report["partition"]["global"] is None
        assignments = report["partition"]["per_leaf"]
        assert {"1": 2, "2": 2} in assignments
        assert {"1": "u", "2": 3} in assignments


class TestPipelineClosure:
    @pytest.mark.parametrize("seed", range(100))
    def test_generate_verify_decompose_closes(self, seed, tmp_path):
        # in-process CLI calls: spec file -> generate -> verify -> decompose
        from partialiso.cli import main

        spec = random_model_spec(seed, max_p=3, max_aux=2)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(dumps_canonical(model_spec_document(spec)))
        doc_path = tmp_path / "tuple.json"
        assert main(["generate", "--spec", str(spec_path), "--scramble",
                     "--seed", str(seed), "--output", str(doc_path)]) == 0
        verify_out = tmp_path / "verify.json"
        assert main(["verify", str(doc_path), "--output", str(verify_out)]) == 0
        report_path = tmp_path / "report.json"
        assert main(["decompose", str(doc_path), "--output", str(report_path)]) == 0
        report = json.loads(report_path.read_text())
        assert report["pass"] is True
        assert report["residual"] <= 1e-9


class TestCommutantAndEquiv:
    def test_identity_document_commutant(self, tmp_path):
        path = tmp_path / "eye.json"
        path.write_text(dumps_canonical(tuple_document(single_op_tuple(np.eye(3)))))
        code, report = run_json("commutant", str(path))
        assert code == 0
        assert report["dimension"] == 9
        assert report["irreducible"] is False

    def test_irreducible_model_document(self, tmp_path):
        spec = ModelSpec(slot_kinds=[2, 2], aux_dim=1, twist_data={(1, 2): [[1j]]})
        path = tmp_path / "irr.json"
        path.write_text(dumps_canonical(tuple_document(build_model_tuple(spec))))
        code, report = run_json("commutant", str(path))
        assert code == 0
        assert report["dimension"] == 1
        assert report["irreducible"] is True

    def test_tuple_equivalent_to_its_scramble(self, pair_file, scrambled_file):
        code, report = run_json("equiv", str(pair_file), str(scrambled_file))
        assert code == 0
        assert report["verdict"] == "EQUIVALENT"
        assert report["residual"] <= 1e-9

    def test_different_orders_not_equivalent(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(dumps_canonical(tuple_document(single_op_tuple(truncated_shift(2)))))
        b.write_text(dumps_canonical(tuple_document(single_op_tuple(truncated_shift(3)))))
        code, report = run_json("equiv", str(a), str(b))
        assert code == 0
        assert report["verdict"] == "NOT_EQUIVALENT"


class TestDeterminismAndContract:
    def test_reports_byte_identical_across_runs(self, scrambled_file, tmp_path):
        outputs = []
        for k in range(3):
            out = tmp_path / f"run{k}.json"
            proc = run_cli("decompose", str(scrambled_file), "--output", str(out))
            assert proc.returncode == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1] == outputs[2]

    def test_generate_byte_identical(self, tmp_path):
        docs = []
        for k in range(3):
            out = tmp_path / f"gen{k}.json"
            proc = run_cli("generate", "--preset", "example43", "--p", "3",
                           "--lambda", "0,1", "--scramble", "--seed", "11",
                           "--output", str(out))
            assert proc.returncode == 0
            docs.append(out.read_bytes())
        assert docs[0] == docs[1] == docs[2]

    def test_timing_flag_adds_a_number(self, pair_file):
        code, report = run_json("verify", str(pair_file), "--timing")
        assert code == 0
        assert isinstance(report["timing"], float)

    def test_default_report_has_null_timing(self, pair_file):
        _, report = run_json("verify", str(pair_file))
        assert report["timing"] is None

    def test_exit_code_contract(self, pair_file, tmp_path):
        assert run_cli("verify", str(pair_file)).returncode == 0
        doc = json.loads(pair_file.read_text())
        doc["operators"][0]["matrix"][0][0] = [0.7, 0.0]
        bad_math = tmp_path / "bad_math.json"
        bad_math.write_text(json.dumps(doc))
        assert run_cli("verify", str(bad_math)).returncode == 1
        bad_schema = tmp_path / "bad_schema.json"
        bad_schema.write_text('{"schema_version":"1"}')
        assert run_cli("verify", str(bad_schema)).returncode == 2
        assert run_cli("verify", str(tmp_path / "missing.json")).returncode == 2
