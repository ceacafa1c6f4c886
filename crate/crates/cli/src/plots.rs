//! Generated matplotlib scripts. They read the CSVs written next to them
//! and save a PNG; nothing is rendered by this program itself.

const HEADER: &str = r#"import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def load(name):
    with open(HERE / name, newline="") as f:
        rows = list(csv.DictReader(f))
    def col(key):
        out = []
        for r in rows:
            v = r[key]
            out.append(float("nan") if v.startswith("NA:") else float(v))
        return out
    return col
"#;

pub fn fig1(files: &[(f64, String)]) -> String {
    let entries: Vec<String> = files.iter().map(|(v, f)| format!("({v}, \"{f}\")")).collect();
    format!(
        r#"{HEADER}
FILES = [{}]

fig, axes = plt.subplots(1, len(FILES), figsize=(4.5 * len(FILES), 3.4), squeeze=False)
for ax, (v, name) in zip(axes[0], FILES):
    col = load(name)
    ax.plot(col("E"), col("abs_t"), "-", color="k", label="|t|")
    ax.plot(col("E"), col("abs_rho"), "--", color="k", label="|rho|")
    ax.set_xlim(-2, 2)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("E")
    ax.set_title(f"N = 6, v = {{v}}")
axes[0][0].legend(loc="lower center")
fig.tight_layout()
fig.savefig(HERE / "fig1.png", dpi=150)
if "--show" in sys.argv:
    plt.show()
"#,
        entries.join(", ")
    )
}

pub fn fig2(landscape: &str, re_z: &str, branch: Option<(f64, f64)>) -> String {
    let branch = match branch {
        Some((v, e)) => format!("({v}, {e})"),
        None => "None".to_string(),
    };
    format!(
        r#"{HEADER}
import numpy as np

col = load("{landscape}")
v = np.array(col("v"))
E = np.array(col("E"))
t = np.array(col("abs_t"))
rho = np.array(col("abs_rho"))
vs = np.unique(v)
Es = np.unique(E)
shape = (len(vs), len(Es))
V = v.reshape(shape)
EE = E.reshape(shape)

zc = load("{re_z}")
zv = zc("v")
curves = [zc(k) for k in ("re_z_1", "re_z_2", "re_z_3")]
BRANCH = {branch}

fig, (top, bottom) = plt.subplots(2, 1, figsize=(5.5, 8), sharex=True)
im = top.pcolormesh(V, EE, t.reshape(shape), shading="auto", cmap="viridis")
fig.colorbar(im, ax=top, label="|t|")
levels = np.arange(1, 30) / 30.0
bottom.contour(V, EE, rho.reshape(shape), levels=levels, colors="k", linewidths=0.4)
for ax in (top, bottom):
    for c in curves:
        ax.plot(zv, c, color="r", linewidth=2)
    if BRANCH is not None:
        ax.plot([BRANCH[0]], [BRANCH[1]], "o", color="orange")
    ax.set_ylim(Es.min(), Es.max())
    ax.set_ylabel("E")
bottom.set_xlabel("v")
bottom.set_title("|rho|, contour spacing 1/30")
fig.tight_layout()
fig.savefig(HERE / "fig2.png", dpi=150)
if "--show" in sys.argv:
    plt.show()
"#
    )
}

pub fn fig3(t_file: &str, rho_file: &str) -> String {
    format!(
        r#"{HEADER}
import numpy as np

tc = load("{t_file}")
rc = load("{rho_file}")
r = np.array(tc("r"))
E = np.array(tc("E"))
rs = np.unique(r)
Es = np.unique(E)
shape = (len(rs), len(Es))
fig, axes = plt.subplots(2, 1, figsize=(6, 8), sharex=True)
for ax, values, label in ((axes[0], tc("abs_t"), "|t|"), (axes[1], rc("abs_rho"), "|rho|")):
    im = ax.pcolormesh(E.reshape(shape), r.reshape(shape), np.array(values).reshape(shape), shading="auto")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_ylabel("r")
axes[1].set_xlabel("E")
fig.tight_layout()
fig.savefig(HERE / "fig3.png", dpi=150)
if "--show" in sys.argv:
    plt.show()
"#
    )
}
