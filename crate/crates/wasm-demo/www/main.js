import init, { design, sweep, modes } from "./pkg/obfuskit_wasm.js";

const ids = ["corr", "fs", "fu", "eps"];
const val = (id) => parseFloat(document.getElementById(id).value);
const fmt = (v) => v.toExponential(3);

function renderDesign(d) {
  const box = document.getElementById("design");
  if (d.error) {
    box.innerHTML = `<p class="err">${d.error}</p>`;
    return;
  }
  const head = d.p_x.map((_, x) => `<th>x=${x}</th>`).join("");
  const rows = d.x_given_z
    .map((r, z) => `<tr><th>P(x | z=${z})</th>${r.map((p) => `<td>${p.toFixed(4)}</td>`).join("")}</tr>`)
    .join("");
  const names = ["I(X;Z)", "I(U;Z)", "I(S;Z)"];
  const info = names
    .map((n, i) => `<tr><th>${n}</th><td>${fmt(d.exact[i])}</td><td>${fmt(d.local[i])}</td></tr>`)
    .join("");
  box.innerHTML = `
    <p>epsilon = ${d.epsilon.toFixed(4)}, null space dimension ${d.null_dim}</p>
    <table><tr><th></th>${head}</tr>
      <tr><th>P(x)</th>${d.p_x.map((p) => `<td>${p.toFixed(4)}</td>`).join("")}</tr>${rows}</table>
    <table><tr><th>nats</th><th>exact</th><th>local</th></tr>${info}</table>`;
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
}

function renderSweep(s) {
  const c = document.getElementById("sweep");
  const ctx = c.getContext("2d");
  const pad = 50;
  axes(ctx, c.width, c.height, pad);
  if (s.error) return;
  const lx = s.epsilon.map(Math.log10);
  const ly = s.local_uz.concat(s.exact_uz).filter((v) => v > 0).map(Math.log10);
  const [x0, x1] = [Math.min(...lx), Math.max(...lx)];
  const [y0, y1] = [Math.min(...ly), Math.max(...ly)];
  const px = (v) => pad + ((Math.log10(v) - x0) / (x1 - x0 || 1)) * (c.width - 1.5 * pad);
  const py = (v) => c.height - pad - ((Math.log10(v) - y0) / (y1 - y0 || 1)) * (c.height - 1.5 * pad);
  const line = (ys, colour, dash) => {
    ctx.strokeStyle = colour;
    ctx.setLineDash(dash);
    ctx.beginPath();
    s.epsilon.forEach((e, i) => (i ? ctx.lineTo(px(e), py(ys[i])) : ctx.moveTo(px(e), py(ys[i]))));
    ctx.stroke();
  };
  line(s.exact_uz, "#1565c0", []);
  line(s.local_uz, "#e65100", [6, 4]);
  ctx.setLineDash([]);
  ctx.fillStyle = "#333";
  ctx.fillText("log10 epsilon", c.width / 2, c.height - 15);
  ctx.fillText("log10 I(U;Z)", 5, 20);
  ctx.fillStyle = "#1565c0";
  ctx.fillText("exact", c.width - 120, 30);
  ctx.fillStyle = "#e65100";
  ctx.fillText("local", c.width - 120, 45);
  ctx.fillStyle = "#333";
  ctx.fillText(`max I(S;Z) = ${fmt(Math.max(...s.exact_sz))}`, c.width - 220, 60);
}

function renderModes(m) {
  const c = document.getElementById("modes");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (m.error) return;
  const bar = (sigmas, y, label, colour) => {
    ctx.fillStyle = "#333";
    ctx.fillText(label, 5, y + 12);
    sigmas.forEach((s, i) => {
      ctx.fillStyle = colour;
      ctx.fillRect(80 + i * 170, y, 150 * s, 18);
      ctx.fillStyle = "#333";
      ctx.fillText(s.toFixed(4), 80 + i * 170, y + 32);
    });
  };
  bar(m.ux, 20, "U vs X", "#1565c0");
  bar(m.sx, 90, "S vs X", "#c62828");
}

function update() {
  for (const id of ids) document.querySelector(`output[for=${id}]`).textContent = val(id);
  const [c, fs, fu, eps] = ids.map(val);
  renderDesign(JSON.parse(design(c, fs, fu, eps)));
  renderSweep(JSON.parse(sweep(c, fs, fu, 40)));
  renderModes(JSON.parse(modes(c, fs, fu)));
}

await init();
for (const id of ids) document.getElementById(id).addEventListener("input", update);
update();
