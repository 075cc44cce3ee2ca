import sys

import numpy as np
import pytest

from viewplan.fileio import read_plan_file, write_ply
from viewplan.geometry import look_at_center_space
from viewplan.metrics import chamfer_distance
from viewplan.scene import AdapterConfig, AdapterError, reward_external

COPY_REF = (
    "import shutil, sys; shutil.copy(sys.argv[1], 'recon.ply')"
)
EMPTY_CLOUD = (
    "open('recon.ply','w').write("
    "'ply\\nformat ascii 1.0\\nelement vertex 0\\n"
    "property float x\\nproperty float y\\nproperty float z\\nend_header\\n')"
)


def py_cmd(code, *args):
    return (sys.executable, "-c", code, *args)


@pytest.fixture
def reference(tmp_path):
    cloud = np.random.default_rng(0).normal(size=(50, 3))
    path = tmp_path / "reference.ply"
    write_ply(cloud, path)
    return cloud, str(path)


def mid_theta(space):
    return space.lower + 0.5 * (space.upper - space.lower)


SPACE = look_at_center_space(2, (0, 0, 0))


class TestRewardExternal:
    def test_copy_stub_scores_zero(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd(COPY_REF, ref_path),
                                reference_cloud_path=ref_path)
        r = reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")
        assert abs(r) < 1e-12

    def test_empty_stub_returns_worst_case(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd(EMPTY_CLOUD),
                                reference_cloud_path=ref_path, worst_case_reward=-7.5)
        r = reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")
        assert r == -7.5

    def test_shifted_cloud_matches_metric_oracle(self, tmp_path, reference):
        cloud, ref_path = reference
        shifted_path = tmp_path / "shifted.ply"
        write_ply(cloud + [0.3, 0.0, 0.0], shifted_path)
        adapter = AdapterConfig(command=py_cmd(COPY_REF, str(shifted_path)),
                                reference_cloud_path=ref_path)
        r = reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")
        from viewplan.fileio import read_ply

        expected = -chamfer_distance(read_ply(ref_path), read_ply(shifted_path))
        assert r == pytest.approx(expected, abs=1e-12)

    def test_plan_file_is_written_for_command(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd(COPY_REF, ref_path),
                                reference_cloud_path=ref_path)
        work = tmp_path / "work"
        theta = mid_theta(SPACE)
        reward_external(theta, SPACE, adapter, work)
        plan = read_plan_file(work / "plan.json")
        assert len(plan.cameras) == 2
        from viewplan.geometry import decode_plan

        expected = decode_plan(theta, SPACE)
        np.testing.assert_allclose(plan.cameras[0].position, expected.cameras[0].position)

    def test_nonzero_exit_raises(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd("import sys; sys.exit(3)"),
                                reference_cloud_path=ref_path)
        with pytest.raises(AdapterError, match="exited 3"):
            reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")

    def test_missing_output_raises(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd("pass"), reference_cloud_path=ref_path)
        with pytest.raises(AdapterError, match="recon.ply"):
            reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")

    def test_timeout_raises(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=py_cmd("import time; time.sleep(30)"),
                                reference_cloud_path=ref_path, timeout=0.5)
        with pytest.raises(AdapterError, match="timed out"):
            reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")

    def test_shell_string_command(self, tmp_path, reference):
        _, ref_path = reference
        adapter = AdapterConfig(command=f"cp {ref_path} recon.ply",
                                reference_cloud_path=ref_path)
        r = reward_external(mid_theta(SPACE), SPACE, adapter, tmp_path / "work")
        assert abs(r) < 1e-12
