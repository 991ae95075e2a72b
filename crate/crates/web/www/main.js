import init, { Explorer, pulseDuration } from './pkg/pnr_web.js';

const $ = (id) => document.getElementById(id);
const COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b'];
const SVG = 'http://www.w3.org/2000/svg';

function el(name, attrs, parent) {
  const e = document.createElementNS(SVG, name);
  for (const [k, v] of Object.entries(attrs)) e.setAttribute(k, v);
  if (parent) parent.appendChild(e);
  return e;
}

function fmt(p) {
  return p === 0 ? '0' : p < 1e-3 ? p.toExponential(2) : p.toFixed(4);
}

function plot(ex, logy) {
  const svg = $('plot');
  svg.replaceChildren();
  const W = 640, H = 340, L = 50, R = 10, T = 10, B = 30;
  const grid = ex.grid();
  const curves = Array.from({ length: ex.curveCount() }, (_, n) => ex.curve(n));
  const ymax = Math.max(...curves.map((c) => Math.max(...c)));
  const ymin = logy ? ymax * 1e-6 : 0;
  const x0 = grid[0], x1 = grid[grid.length - 1];
  const sx = (t) => L + ((t - x0) / (x1 - x0)) * (W - L - R);
  const sy = (v) => {
    const f = logy ? (Math.log10(Math.max(v, ymin)) - Math.log10(ymin)) / (Math.log10(ymax) - Math.log10(ymin)) : v / ymax;
    return H - B - f * (H - T - B);
  };

  const b = ex.bounds();
  for (let r = 0; r < b.length / 2; r++) {
    const lo = Math.max(b[2 * r], x0), hi = Math.min(b[2 * r + 1], x1);
    if (hi <= lo) continue;
    el('rect', { x: sx(lo), y: T, width: sx(hi) - sx(lo), height: H - T - B, fill: COLORS[r % COLORS.length], 'fill-opacity': 0.08 }, svg);
    el('line', { x1: sx(lo), x2: sx(lo), y1: T, y2: H - B, stroke: '#888', 'stroke-dasharray': '3 3' }, svg);
    const label = el('text', { x: (sx(lo) + sx(hi)) / 2, y: T + 12, 'text-anchor': 'middle' }, svg);
    label.textContent = r === b.length / 2 - 1 ? `${r + 1}+` : `${r + 1}`;
  }

  curves.forEach((c, n) => {
    const d = Array.from(c, (v, i) => `${i ? 'L' : 'M'}${sx(grid[i]).toFixed(1)},${sy(v).toFixed(1)}`).join('');
    el('path', { d, fill: 'none', stroke: COLORS[n % COLORS.length], 'stroke-width': 1.5 }, svg);
  });

  el('line', { x1: L, x2: W - R, y1: H - B, y2: H - B, stroke: '#333' }, svg);
  el('line', { x1: L, x2: L, y1: T, y2: H - B, stroke: '#333' }, svg);
  const step = Math.pow(10, Math.floor(Math.log10((x1 - x0) / 5)));
  const tick = step * ([1, 2, 5].find((m) => (x1 - x0) / (step * m) <= 8) || 10);
  for (let t = Math.ceil(x0 / tick) * tick; t <= x1; t += tick) {
    el('line', { x1: sx(t), x2: sx(t), y1: H - B, y2: H - B + 4, stroke: '#333' }, svg);
    el('text', { x: sx(t), y: H - B + 16, 'text-anchor': 'middle' }, svg).textContent = t.toFixed(0);
  }
  el('text', { x: W - R, y: H - 2, 'text-anchor': 'end' }, svg).textContent = 'arrival time (ps)';
  el('text', { x: 4, y: T + 8 }, svg).textContent = logy ? 'log density' : 'density';
}

function table(target, header, rows) {
  const t = $(target);
  t.replaceChildren();
  const head = t.insertRow();
  for (const h of header) head.appendChild(document.createElement('th')).textContent = h;
  for (const r of rows) {
    const tr = t.insertRow();
    for (const v of r) tr.insertCell().textContent = v;
  }
  return t;
}

function explore() {
  for (const input of document.querySelectorAll('#detector input[type=range]')) {
    input.nextElementSibling.textContent = input.value;
  }
  const v = (id) => parseFloat($(id).value);
  const weight = $('optimize').checked ? v('wmiss') : -1;
  let ex;
  try {
    ex = new Explorer(v('jitter'), v('tau'), v('x1'), v('x2'), v('eta'), v('pulse'), weight);
  } catch (e) {
    $('error').textContent = e.message;
    return;
  }
  $('error').textContent = '';
  plot(ex, $('logy').checked);
  $('nmax').textContent = ex.nMax();

  const miss = ex.pMissing(), mis = ex.pMisidentified(), b = ex.bounds();
  const k = miss.length;
  table('errors', ['region', 'from (ps)', 'to (ps)', 'p missing', 'p misidentified'],
    Array.from({ length: k }, (_, r) => [r === k - 1 ? `${r + 1}+` : `${r + 1}`, b[2 * r].toFixed(1), b[2 * r + 1].toFixed(1), fmt(miss[r]), fmt(mis[r])]));

  const cols = ex.povmColumns(), pi = ex.povm();
  const header = ['n', ...Array.from({ length: cols }, (_, j) => (j === cols - 1 ? `${j}+` : `${j}`))];
  const t = table('povm', header,
    Array.from({ length: pi.length / cols }, (_, n) => [n, ...Array.from(pi.slice(n * cols, (n + 1) * cols), fmt)]));
  for (let n = 0; n < pi.length / cols; n++) {
    for (let j = 0; j < cols; j++) {
      t.rows[n + 1].cells[j + 1].style.background = `rgba(31, 119, 180, ${pi[n * cols + j].toFixed(3)})`;
    }
  }
  ex.free();
}

function pulse() {
  const v = (id) => parseFloat($(id).value);
  try {
    const [tl, out, lo, hi] = pulseDuration(v('lambda'), v('bw'), v('tbp'), v('fiber'));
    table('pulse-out', ['', 'ps'], [
      ['transform limited', tl.toFixed(3)],
      ['after fibre', out.toFixed(3)],
      ['range over ±0.04 nm and both pulse shapes', `${lo.toFixed(3)} to ${hi.toFixed(3)}`],
    ]);
  } catch (e) {
    table('pulse-out', ['error'], [[e.message]]);
  }
}

await init();
document.querySelectorAll('#detector input').forEach((i) => i.addEventListener('input', explore));
document.querySelectorAll('#optics input, #optics select').forEach((i) => i.addEventListener('input', pulse));
explore();
pulse();
