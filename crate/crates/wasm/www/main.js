import init, { simulateEpidemic, simulateLynxHare, simulateCascade } from "./pkg/sgnn_forge_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function lines(canvas, series, { log = false } = {}) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 30;
  ctx.clearRect(0, 0, w, h);
  const tf = (v) => (log ? Math.log10(v + 1) : v);
  let max = 0, len = 0;
  for (const s of series) {
    len = Math.max(len, s.values.length);
    for (const v of s.values) max = Math.max(max, tf(v));
  }
  if (max === 0) max = 1;
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 5, w - pad - 5, h - pad - 5);
  ctx.fillStyle = "#555";
  ctx.fillText(log ? `log10 ${max.toFixed(1)}` : max.toFixed(0), 2, 14);
  ctx.fillText(String(len), w - 30, h - 10);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.values.forEach((v, i) => {
      const x = pad + (i / Math.max(1, len - 1)) * (w - pad - 5);
      const y = h - pad - (tf(v) / max) * (h - pad - 10);
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, pad + 8 + k * 150, h - 10);
  });
}

function runEpidemic() {
  const r = JSON.parse(simulateEpidemic(num("epi-seed"), num("epi-days")));
  lines($("epi-canvas"), [
    { label: "true infections", color: "#1f77b4", values: r.true_infections },
    { label: "reported", color: "#ff7f0e", values: r.reported_infections },
    { label: "deaths", color: "#d62728", values: r.true_deaths },
  ], { log: true });
  const flags = Object.entries(r.flags).filter(([, on]) => on).map(([k]) => k).join(", ") || "none";
  const npi = r.interventions.map((w) => `days ${w.start_day}-${w.end_day} (-${(100 * w.reduction).toFixed(0)}%)`).join("; ");
  $("epi-meta").textContent = `R0 ${r.r0.toFixed(2)}  population ${r.population}\nfeatures: ${flags}\ninterventions: ${npi || "none"}`;
}

function runLynxHare() {
  const r = JSON.parse(simulateLynxHare(num("eco-seed"), num("eco-years"), $("eco-noise").checked));
  lines($("eco-canvas"), [
    { label: "hare", color: "#2ca02c", values: r.hare },
    { label: "lynx", color: "#9467bd", values: r.lynx },
  ]);
  const eq = r.equilibrium ? `hare ${r.equilibrium[0].toFixed(1)}, lynx ${r.equilibrium[1].toFixed(1)}` : "none";
  $("eco-meta").textContent = `coexistence equilibrium: ${eq}`;
}

function runCascade() {
  const r = JSON.parse(simulateCascade(num("cas-seed"), num("cas-nodes"), num("cas-p"), num("cas-mask")));
  const canvas = $("cas-canvas");
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const span = (a) => [Math.min(...a), Math.max(...a)];
  const [x0, x1] = span(r.x), [y0, y1] = span(r.y);
  const px = (i) => 15 + ((r.x[i] - x0) / (x1 - x0 || 1)) * (w - 30);
  const py = (i) => 15 + ((r.y[i] - y0) / (y1 - y0 || 1)) * (h - 30);
  ctx.strokeStyle = "rgba(0,0,0,0.08)";
  for (const [u, v] of r.edges) {
    ctx.beginPath();
    ctx.moveTo(px(u), py(u));
    ctx.lineTo(px(v), py(v));
    ctx.stroke();
  }
  const maxT = Math.max(1, ...r.infection_time);
  const top = new Set((r.ranked || []).slice(0, 5).map(([n]) => n));
  r.x.forEach((_, i) => {
    const t = r.infection_time[i];
    ctx.fillStyle = t < 0 ? "#ccc" : `hsl(${(240 * t) / maxT}, 80%, 45%)`;
    ctx.beginPath();
    ctx.arc(px(i), py(i), i === r.source ? 7 : 3, 0, 2 * Math.PI);
    ctx.fill();
    if (t >= 0 && !r.observed[i]) {
      ctx.strokeStyle = "#000";
      ctx.stroke();
    }
    if (top.has(i)) {
      ctx.strokeStyle = "#d62728";
      ctx.lineWidth = 2;
      ctx.strokeRect(px(i) - 6, py(i) - 6, 12, 12);
      ctx.lineWidth = 1;
    }
  });
  const infected = r.infection_time.filter((t) => t >= 0).length;
  const rank = (r.ranked || []).findIndex(([n]) => n === r.source);
  $("cas-meta").textContent =
    `infected ${infected} of ${r.x.length}; source node ${r.source} (large dot)\n` +
    `rumor-center rank of the source: ${rank >= 0 ? rank + 1 : "outside top 10"}; red squares mark the top 5; ringed nodes are masked`;
}

await init();
$("epi-run").onclick = runEpidemic;
$("eco-run").onclick = runLynxHare;
$("cas-run").onclick = runCascade;
runEpidemic();
runLynxHare();
runCascade();
