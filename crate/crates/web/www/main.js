import init, { kl, attention, search } from './pkg/gmmret_web.js';

const $ = (id) => document.getElementById(id);
const SCALE = 35; // pixels per unit, origin at canvas centre

function toPx(canvas, [x, y]) {
  return [canvas.width / 2 + x * SCALE, canvas.height / 2 - y * SCALE];
}

function fromPx(canvas, px, py) {
  return [(px - canvas.width / 2) / SCALE, (canvas.height / 2 - py) / SCALE];
}

function axes(ctx, canvas) {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = '#e4e4e4';
  ctx.beginPath();
  ctx.moveTo(canvas.width / 2, 0); ctx.lineTo(canvas.width / 2, canvas.height);
  ctx.moveTo(0, canvas.height / 2); ctx.lineTo(canvas.width, canvas.height / 2);
  ctx.stroke();
}

function showError(el, e) {
  el.textContent = String(e.message ?? e);
  el.className = 'err';
}

// KL explorer

const klState = {
  response: [{ mean: [-1, 0.5], logvar: 0 }, { mean: [2, -1], logvar: -0.5 }],
  context: [{ mean: [-1.5, 1], logvar: 0.3 }, { mean: [1.5, -1.5], logvar: 0 }],
  selected: null,
  dragging: false,
};
const klInitial = JSON.stringify(klState);

function mixture(comps) {
  return {
    means: comps.map((c) => c.mean),
    log_vars: comps.map((c) => [c.logvar, c.logvar]),
  };
}

function drawKl(report) {
  const canvas = $('kl-canvas');
  const ctx = canvas.getContext('2d');
  axes(ctx, canvas);
  if (report) {
    ctx.strokeStyle = '#999';
    ctx.setLineDash([4, 3]);
    report.matches.forEach(([c], r) => {
      const a = toPx(canvas, klState.response[r].mean);
      const b = toPx(canvas, klState.context[c].mean);
      ctx.beginPath(); ctx.moveTo(...a); ctx.lineTo(...b); ctx.stroke();
    });
    ctx.setLineDash([]);
  }
  for (const [side, colour] of [['context', '#e07b00'], ['response', '#1f5fbf']]) {
    klState[side].forEach((c, i) => {
      const [x, y] = toPx(canvas, c.mean);
      const r = Math.exp(c.logvar / 2) * SCALE;
      const sel = klState.selected && klState.selected.side === side && klState.selected.i === i;
      ctx.strokeStyle = colour;
      ctx.lineWidth = sel ? 3 : 1.5;
      ctx.beginPath(); ctx.arc(x, y, r, 0, 2 * Math.PI); ctx.stroke();
      ctx.fillStyle = colour;
      ctx.beginPath(); ctx.arc(x, y, 4, 0, 2 * Math.PI); ctx.fill();
    });
  }
  ctx.lineWidth = 1;
}

function runKl() {
  const out = $('kl-out');
  try {
    const request = {
      response: mixture(klState.response),
      context: mixture(klState.context),
      samples: Math.max(100, Number($('kl-samples').value) | 0),
      seed: 1,
    };
    const report = JSON.parse(kl(JSON.stringify(request)));
    out.className = '';
    out.textContent =
      `approximation   ${report.approx.toFixed(4)}\n` +
      `  log(K/L) term ${report.log_ratio_term.toFixed(4)}\n` +
      `Monte Carlo     ${report.monte_carlo.toFixed(4)} ± ${report.monte_carlo_se.toFixed(4)}\n\n` +
      report.matches.map(([c, v], r) => `resp ${r} -> ctx ${c}  KL ${v.toFixed(3)}`).join('\n');
    drawKl(report);
  } catch (e) {
    showError(out, e);
    drawKl(null);
  }
}

function pick(px, py) {
  const canvas = $('kl-canvas');
  let best = null;
  for (const side of ['response', 'context']) {
    klState[side].forEach((c, i) => {
      const [x, y] = toPx(canvas, c.mean);
      const d = Math.hypot(x - px, y - py);
      if (d < 12 && (!best || d < best.d)) best = { side, i, d };
    });
  }
  return best;
}

function setupKl() {
  const canvas = $('kl-canvas');
  canvas.addEventListener('mousedown', (ev) => {
    const hit = pick(ev.offsetX, ev.offsetY);
    klState.selected = hit;
    klState.dragging = !!hit;
    if (hit) $('kl-logvar').value = klState[hit.side][hit.i].logvar;
    drawKl(null);
    runKl();
  });
  canvas.addEventListener('mousemove', (ev) => {
    if (!klState.dragging) return;
    const { side, i } = klState.selected;
    klState[side][i].mean = fromPx(canvas, ev.offsetX, ev.offsetY);
    runKl();
  });
  window.addEventListener('mouseup', () => { klState.dragging = false; });
  $('kl-logvar').addEventListener('input', (ev) => {
    if (!klState.selected) return;
    const { side, i } = klState.selected;
    klState[side][i].logvar = Number(ev.target.value);
    runKl();
  });
  $('kl-add-r').onclick = () => { klState.response.push({ mean: [0, 0], logvar: 0 }); runKl(); };
  $('kl-add-c').onclick = () => { klState.context.push({ mean: [0, 0], logvar: 0 }); runKl(); };
  $('kl-reset').onclick = () => { Object.assign(klState, JSON.parse(klInitial)); runKl(); };
  $('kl-samples').addEventListener('change', runKl);
  runKl();
}

// Attention viewer

function runAttention() {
  const out = $('att-out');
  try {
    const report = JSON.parse(attention(
      $('att-text').value,
      Number($('att-k').value) | 0,
      Number($('att-d').value) | 0,
      Number($('att-seed').value) >>> 0,
    ));
    const k = report.weights[0]?.length ?? 0;
    const head = '<tr><th></th>' + Array.from({ length: k }, (_, c) => `<th>k${c}</th>`).join('') + '</tr>';
    const rows = report.tokens.map((t, i) => '<tr><th>' + t + '</th>' + report.weights[i].map((w) => {
      const shade = Math.round(255 - 200 * w);
      return `<td style="background: rgb(${shade},${shade},255)">${w.toFixed(2)}</td>`;
    }).join('') + '</tr>').join('');
    out.className = '';
    out.innerHTML = `<table class="heat">${head}${rows}</table>`;
  } catch (e) {
    showError(out, e);
  }
}

function setupAttention() {
  for (const id of ['att-text', 'att-k', 'att-d', 'att-seed']) $(id).addEventListener('input', runAttention);
  runAttention();
}

// IVF search

const query = [1, 1];

function drawIvf(report) {
  const canvas = $('ivf-canvas');
  const ctx = canvas.getContext('2d');
  axes(ctx, canvas);
  const probed = new Set(report.probed.flat());
  // Shade probed cells by colouring every response mean whose nearest centroid was probed.
  const nearest = (p) => {
    let best = 0, bestD = Infinity;
    report.centroids.forEach((c, i) => {
      const d = (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2;
      if (d < bestD) { bestD = d; best = i; }
    });
    return best;
  };
  const hits = new Set(report.hits.map((h) => h.id));
  for (const [id, means] of report.responses) {
    for (const m of means) {
      const [x, y] = toPx(canvas, m);
      ctx.fillStyle = hits.has(id) ? '#c00' : probed.has(nearest(m)) ? '#7aa6e0' : '#ccc';
      ctx.beginPath(); ctx.arc(x, y, hits.has(id) ? 4 : 2.5, 0, 2 * Math.PI); ctx.fill();
    }
  }
  report.centroids.forEach((c, i) => {
    const [x, y] = toPx(canvas, c);
    ctx.strokeStyle = probed.has(i) ? '#1f5fbf' : '#666';
    ctx.lineWidth = probed.has(i) ? 2 : 1;
    ctx.beginPath(); ctx.moveTo(x - 5, y - 5); ctx.lineTo(x + 5, y + 5);
    ctx.moveTo(x + 5, y - 5); ctx.lineTo(x - 5, y + 5); ctx.stroke();
  });
  ctx.lineWidth = 1;
  for (const m of report.query) {
    const [x, y] = toPx(canvas, m);
    ctx.fillStyle = '#0a0';
    ctx.fillRect(x - 4, y - 4, 8, 8);
  }
}

function runIvf() {
  const out = $('ivf-out');
  try {
    const report = JSON.parse(search(
      Number($('ivf-n').value) | 0,
      Number($('ivf-cells').value) | 0,
      Number($('ivf-probe').value) | 0,
      query[0], query[1],
      Number($('ivf-seed').value) >>> 0,
    ));
    const exact = new Set(report.exact.map((h) => h.id));
    const found = report.hits.filter((h) => exact.has(h.id)).length;
    out.className = '';
    out.textContent =
      `probed cells ${[...new Set(report.probed.flat())].sort((a, b) => a - b).join(', ')}\n` +
      `index top 5 overlaps exact top 5: ${found}/5\n\n` +
      'index            exact\n' +
      report.exact.map((e, i) => {
        const h = report.hits[i];
        const left = h ? `${h.id.padEnd(5)} ${h.score.toFixed(3)}` : '-';
        return `${left.padEnd(17)}${e.id.padEnd(5)} ${e.score.toFixed(3)}`;
      }).join('\n');
    drawIvf(report);
  } catch (e) {
    showError(out, e);
  }
}

function setupIvf() {
  $('ivf-canvas').addEventListener('click', (ev) => {
    [query[0], query[1]] = fromPx($('ivf-canvas'), ev.offsetX, ev.offsetY);
    runIvf();
  });
  for (const id of ['ivf-n', 'ivf-cells', 'ivf-probe', 'ivf-seed']) $(id).addEventListener('change', runIvf);
  runIvf();
}

init().then(() => {
  $('status').textContent = '';
  setupKl();
  setupAttention();
  setupIvf();
}).catch((e) => showError($('status'), e));
