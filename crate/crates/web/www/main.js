import init, { frequencies, freeVibration, slew } from "./pkg/mrdmoc_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c"];
const num = (id) => Number(document.getElementById(id).value);

// One stacked panel per curve, sharing the time axis.
function plot(canvas, curves) {
  const ctx = canvas.getContext("2d");
  const t = curves.time();
  const n = curves.count();
  const h = canvas.height / n;
  const left = 70;
  const w = canvas.width - left - 10;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px sans-serif";
  for (let i = 0; i < n; i++) {
    const y = curves.column(i);
    let lo = Math.min(...y);
    let hi = Math.max(...y);
    if (hi === lo) { hi += 1; lo -= 1; }
    const top = i * h + 18;
    const ph = h - 30;
    const sx = (v) => left + (v - t[0]) / (t[t.length - 1] - t[0]) * w;
    const sy = (v) => top + ph - (v - lo) / (hi - lo) * ph;
    ctx.strokeStyle = "#bbb";
    ctx.strokeRect(left, top, w, ph);
    ctx.fillStyle = "#222";
    ctx.fillText(curves.name(i), left + 4, top - 4);
    ctx.fillText(hi.toPrecision(3), 2, top + 10);
    ctx.fillText(lo.toPrecision(3), 2, top + ph);
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    const stride = Math.max(1, Math.floor(t.length / 2000));
    for (let k = 0; k < t.length; k += stride) {
      const px = sx(t[k]);
      const py = sy(y[k]);
      if (k === 0) ctx.moveTo(px, py); else ctx.lineTo(px, py);
    }
    ctx.stroke();
  }
  ctx.fillStyle = "#222";
  ctx.fillText(`t = ${t[0]} ... ${t[t.length - 1]} s`, left, canvas.height - 2);
}

function wire(button, out, action) {
  const target = document.getElementById(out);
  document.getElementById(button).addEventListener("click", () => {
    target.classList.remove("error");
    try {
      target.textContent = action();
    } catch (e) {
      target.classList.add("error");
      target.textContent = String(e);
    }
  });
}

await init();

wire("f-run", "f-out", () =>
  Array.from(frequencies(num("f-modes")), (w) => w.toFixed(3)).join(", ") + " rad/s");

wire("v-run", "v-out", () => {
  const c = freeVibration(num("v-eta"), num("v-tf"), num("v-dt"), num("v-p"), num("v-r"));
  plot(document.getElementById("v-plot"), c);
  return c.summary();
});

wire("s-run", "s-out", () => {
  const c = slew(num("s-theta"), num("s-tf"), num("s-dt"), num("s-p"), num("s-r"));
  plot(document.getElementById("s-plot"), c);
  return c.summary();
});
