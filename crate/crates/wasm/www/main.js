import init, { Demo } from "./pkg/nonholo_wasm.js";

const $ = (id) => document.getElementById(id);
const state = { yaw: 0.6, pitch: 0.5, base: [0.25, 0.1], run: null };

await init();
const demo = new Demo(Demo.reference_scene());
const delta = demo.delta();
const path = demo.path();

function status(text) {
  $("status").textContent = text;
}

function project([x, y, z]) {
  const { yaw, pitch } = state;
  const x1 = x * Math.cos(yaw) - y * Math.sin(yaw);
  const y1 = x * Math.sin(yaw) + y * Math.cos(yaw);
  const z1 = y1 * Math.sin(pitch) + z * Math.cos(pitch);
  const c = $("view");
  const s = c.width / 3.4;
  return [c.width / 2 + s * x1, c.height / 2 - s * z1];
}

function polyline(ctx, flat, color, width, closed) {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.beginPath();
  for (let i = 0; i < flat.length; i += 3) {
    const [u, v] = project([flat[i], flat[i + 1], flat[i + 2]]);
    i === 0 ? ctx.moveTo(u, v) : ctx.lineTo(u, v);
  }
  if (closed) ctx.closePath();
  ctx.stroke();
}

function drawView() {
  const c = $("view");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  polyline(ctx, path, "#999", 2, true);
  if (state.run) polyline(ctx, state.run.points, "#c33", 1, false);
  const p = startPoint();
  if (p) {
    const [u, v] = project(p);
    ctx.fillStyle = "#06c";
    ctx.beginPath();
    ctx.arc(u, v, 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function drawDisk() {
  const c = $("disk");
  const ctx = c.getContext("2d");
  const r = c.width / 2 - 6;
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.arc(c.width / 2, c.height / 2, r, 0, 2 * Math.PI);
  ctx.stroke();
  const [f, g] = state.base;
  ctx.fillStyle = "#06c";
  ctx.beginPath();
  ctx.arc(c.width / 2 + (f / delta) * r, c.height / 2 - (g / delta) * r, 4, 0, 2 * Math.PI);
  ctx.fill();
  $("base-out").textContent = `(${f.toFixed(3)}, ${g.toFixed(3)})`;
}

function plot(id, xs, ys, label) {
  const c = $(id);
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const pts = xs.map((x, i) => [x, ys[i]]).filter(([x, y]) => Number.isFinite(x) && Number.isFinite(y));
  ctx.fillStyle = "#444";
  ctx.fillText(label, 8, 14);
  if (pts.length < 2) return;
  const [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  const [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  const sx = (x) => 30 + ((x - x0) / (x1 - x0 || 1)) * (c.width - 40);
  const sy = (y) => c.height - 20 - ((y - y0) / (y1 - y0 || 1)) * (c.height - 40);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(sx(x), sy(y)) : ctx.lineTo(sx(x), sy(y))));
  ctx.stroke();
  ctx.fillText(`${y0.toPrecision(3)} .. ${y1.toPrecision(3)}`, 8, c.height - 4);
}

function drawPlots() {
  const run = state.run;
  if (!run) return;
  const h = Array.from(run.h);
  plot("hplot", Array.from(run.s), h.map(Math.log10), "log10 H against time");
  plot("tplot", h.map((v) => Math.log(h[0] / v)), Array.from(run.theta), "projected angle against ln(H0 / H)");
}

function startPoint() {
  try {
    return Array.from(demo.start_point(Number($("theta").value), state.base[0], state.base[1]));
  } catch {
    return null;
  }
}

function redraw() {
  $("theta-out").textContent = Number($("theta").value).toFixed(2);
  $("bscale-out").textContent = Number($("bscale").value).toFixed(2);
  drawDisk();
  drawView();
  drawPlots();
}

function runWith(kind) {
  const p = startPoint();
  if (!p) return status("no tube point with that base offset");
  const t0 = performance.now();
  try {
    state.run = kind === "wind"
      ? demo.winding_loop(...p)
      : demo.simulate(...p, Number($("tmax").value), Number($("bscale").value));
  } catch (e) {
    return status(String(e));
  }
  const r = state.run;
  const h = r.h;
  status(
    `${kind === "wind" ? "winding loop" : "simulation"}: ${r.termination}, ${h.length} drawn samples, ` +
    `H ${h[0].toExponential(3)} -> ${h[h.length - 1].toExponential(3)}, ` +
    `projected angle advance ${r.delta_theta.toFixed(4)} rad, ${(performance.now() - t0).toFixed(0)} ms`
  );
  redraw();
}

$("disk").addEventListener("click", (ev) => {
  const c = $("disk");
  const r = c.width / 2 - 6;
  let f = ((ev.offsetX - c.width / 2) / r) * delta;
  let g = (-(ev.offsetY - c.height / 2) / r) * delta;
  const n = Math.hypot(f, g);
  if (n > 0.98 * delta) [f, g] = [(f * 0.98 * delta) / n, (g * 0.98 * delta) / n];
  state.base = [f, g];
  redraw();
});

let drag = null;
$("view").addEventListener("pointerdown", (ev) => (drag = [ev.clientX, ev.clientY]));
window.addEventListener("pointerup", () => (drag = null));
window.addEventListener("pointermove", (ev) => {
  if (!drag) return;
  state.yaw += (ev.clientX - drag[0]) * 0.01;
  state.pitch = Math.max(-1.5, Math.min(1.5, state.pitch + (ev.clientY - drag[1]) * 0.01));
  drag = [ev.clientX, ev.clientY];
  drawView();
});

$("theta").addEventListener("input", redraw);
$("bscale").addEventListener("input", redraw);
$("run").addEventListener("click", () => runWith("run"));
$("wind").addEventListener("click", () => runWith("wind"));
$("check").addEventListener("click", () => {
  const report = JSON.parse(demo.check());
  status(report.checks.map((c) => `${c.name.padEnd(20)} ${c.pass ? "PASS" : "FAIL"}  ${c.detail}`).join("\n"));
});

redraw();
runWith("run");
