//! Standalone matplotlib scripts that read the CSV/JSON written next to them.

const PRELUDE: &str = "import json\nimport matplotlib.pyplot as plt\nimport pandas as pd\n\n";

pub fn atlas(mark: Option<(f64, f64)>) -> String {
    let levels = match mark {
        Some((ma, c)) => format!("MARK = ({ma}, {c})\n"),
        None => "MARK = None\n".to_string(),
    };
    format!(
        "{PRELUDE}{levels}{}",
        r##"chart = pd.read_csv("chart.csv", comment="#")
curves = pd.read_csv("curves.csv", comment="#")
theta = sorted(chart.theta.unique())
phi = sorted(chart.phi.unique())
grid = lambda col: chart.pivot(index="phi", columns="theta", values=col).values

fig, ax = plt.subplots(1, 2, figsize=(12, 5), sharey=True)
for a, col, title in ((ax[0], "ma", "Ma"), (ax[1], "cos_psi", "cos psi")):
    cs = a.contour(theta, phi, grid(col), 20, linewidths=0.6)
    a.clabel(cs, fontsize=6)
    for (k, kind), c in curves.groupby(["curve", "kind"]):
        a.plot(c.theta, c.phi, "r-" if kind == "fold" else "b-", lw=1.2)
    if MARK is not None:
        a.contour(theta, phi, grid("ma"), [MARK[0]], colors="k", linewidths=2)
        a.contour(theta, phi, grid("cos_psi"), [MARK[1]], colors="k", linewidths=2)
    a.set_title(f"level sets of {title}; red folds, blue Hopf")
    a.set_xlabel("theta")
ax[0].set_ylabel("phi")
plt.tight_layout()
plt.savefig("atlas.png", dpi=150)
"##
    )
}

pub const REGIMES: &str = r##"import json
import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv("regimes.csv", comment="#")
labels = sorted(df.label.unique())
codes = {l: i for i, l in enumerate(labels)}
ma = sorted(df.ma.unique())
cp = sorted(df.cos_psi.unique())
z = df.assign(code=df.label.map(codes)).pivot(index="cos_psi", columns="ma", values="code").values
fig, ax = plt.subplots(figsize=(7, 5))
m = ax.pcolormesh(ma, cp, z, shading="nearest", cmap="tab10", vmin=0, vmax=9)
for l in labels:
    ax.plot([], [], "s", color=m.cmap(m.norm(codes[l])), label=l)
ax.legend(title="stable/total")
ax.set_xlabel("Ma")
ax.set_ylabel("cos psi")
plt.savefig("regimes.png", dpi=150)
"##;

pub const SIMULATE: &str = r##"import matplotlib.pyplot as plt
import pandas as pd

tr = pd.read_csv("trajectory.csv", comment="#")
fig = plt.figure(figsize=(11, 4))
a = fig.add_subplot(1, 2, 1)
for k in ("q1", "q2", "q3", "q4"):
    a.plot(tr.t, tr[k], label=k)
a.legend()
a.set_xlabel("t")
b = fig.add_subplot(1, 2, 2, projection="3d")
b.plot(tr.x, tr.y, tr.z)
b.set_title("lab trajectory")
plt.savefig("simulate.png", dpi=150)
"##;

pub const BASINS: &str = r##"import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv("basins.csv", comment="#")
fig, ax = plt.subplots(1, 2, figsize=(11, 4))
df.attractor.value_counts().sort_index().plot.bar(ax=ax[0])
ax[0].set_title("samples per attractor")
for name, g in df.groupby("attractor"):
    ax[1].hist(g.t_converge.dropna(), bins=30, alpha=0.6, label=name)
ax[1].set_xlabel("convergence time")
ax[1].legend()
plt.savefig("basins.png", dpi=150)
"##;

pub const OPTIMIZE: &str = r##"import json
import matplotlib.pyplot as plt
import pandas as pd

df = pd.read_csv("vax_curves.csv", comment="#")
report = json.load(open("optimize.json"))
fig, ax = plt.subplots(figsize=(7, 5))
for (c, piece), g in df.groupby(["cos_psi", "piece"]):
    line, = ax.plot(g.ma, g.v_ax, lw=0.6)
    s = g.where(g.stable)
    ax.plot(s.ma, s.v_ax, color=line.get_color(), lw=2, label=f"cos psi = {c:.3f}" if piece == 0 else None)
d = report["drive"]
ax.plot([d["ma"]], [d["v_ax"]], "k*", ms=10, label="optimal drive")
ax.set_xlabel("Ma")
ax.set_ylabel("v_ax")
ax.legend(fontsize=7)
plt.savefig("optimize.png", dpi=150)
"##;

pub const PERIODIC: &str = r##"import matplotlib.pyplot as plt
import pandas as pd

br = pd.read_csv("branches.csv", comment="#")
hopf = pd.read_csv("hopf.csv", comment="#")
fig, ax = plt.subplots(figsize=(7, 5))
for k, c in hopf.groupby("curve"):
    ax.plot(c.ma, c.cos_psi, "b-", lw=0.8)
for (b, d), g in br.groupby(["branch", "direction"]):
    ax.plot(g.ma, g.cos_psi, "-", color="0.6", lw=0.8)
    s = g[g.stable]
    ax.plot(s.ma, s.cos_psi, "g.", ms=3)
ax.set_xlabel("Ma")
ax.set_ylabel("cos psi")
ax.set_title("constant-period branches (green: stable orbits), Hopf curves in blue")
plt.savefig("periodic.png", dpi=150)
"##;

pub const HANDLING: &str = r##"import json
import matplotlib.pyplot as plt

doc = json.load(open("handling.json"))

def logs(doc):
    if "log" in doc:
        yield "schedule", doc["log"]
    if "run" in doc:
        for s in doc["run"]["stages"]:
            yield s["name"], s["log"]

fig, ax = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
for name, log in logs(doc):
    t = [s["t"] for s in log["samples"]]
    ax[0].plot(t, [s["cos_psi"] for s in log["samples"]], label=f"{name}: cos psi")
    ax[0].plot(t, [s["ma"] for s in log["samples"]], label=f"{name}: Ma")
    ax[1].plot(t, [s["v_ax"] for s in log["samples"]], label=name)
if "report" in doc:
    for s in doc["report"]["steps"]:
        print(s["step"], s["description"], s["v_ax"])
ax[0].legend(fontsize=7)
ax[1].set_ylabel("v_ax of tracked branch")
ax[1].set_xlabel("t")
plt.savefig("handling.png", dpi=150)
"##;
