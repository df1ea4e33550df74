from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def spec_text(kind: str, output: str) -> str:
    series = {
        "loss-curves": ["crit1_discrete.csv", "crit1_sde.csv"],
        "moments": ["crit1st_discrete.csv", "crit1st_stationary_oracle.csv"],
        "sigma-sweep": ["crit1_sigma_sweep.csv"],
        "phase-timeline": ["crit1_phases.csv"],
        "scaling-panel": ["crit9_discrete.csv", "crit9_rescaled_discrete.csv",
                          "crit9_theta_unrescaled_discrete.csv"],
    }[kind]
    lines = [
        f'kind = "{kind}"',
        f'output = "{output}"',
        f'title = "{kind}"',
        'xlabel = "time"',
        'ylabel = "value"',
    ]
    if kind in ("loss-curves", "scaling-panel"):
        lines.append('yscale = "log"')
    for i, name in enumerate(series):
        lines += ["[[series]]", f'path = "{(DATA / name).as_posix()}"', f'label = "s{i}"']
    return "\n".join(lines) + "\n"


@pytest.fixture
def make_spec_file(tmp_path):
    def _make(kind: str):
        out = tmp_path / kind.replace("-", "_")
        spec_path = tmp_path / f"{kind}.toml"
        spec_path.write_text(spec_text(kind, out.as_posix()))
        return spec_path, out

    return _make
