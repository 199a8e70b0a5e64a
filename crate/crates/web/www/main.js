import init, { edgeMap, maskImage, sinkhornTrace, syntheticSample } from "./pkg/pgs_web.js";

const SIZE = 224;
const $ = (id) => document.getElementById(id);
let pixels = null;

function show(text, isError = false) {
  $("stats").textContent = text;
  $("stats").className = isError ? "err" : "";
}

function paint(canvas, rgba) {
  const ctx = $(canvas).getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE), 0, 0);
}

function setSource(rgba) {
  pixels = new Uint8Array(rgba);
  paint("source", pixels);
}

function loadSample() {
  const s = syntheticSample(0, Number($("sample").value), SIZE);
  setSource(s.rgba);
  $("caption").textContent = `caption: ${s.caption}`;
  runMask();
}

async function loadFile(file) {
  const bitmap = await createImageBitmap(file);
  const ctx = $("source").getContext("2d");
  ctx.drawImage(bitmap, 0, 0, SIZE, SIZE);
  setSource(ctx.getImageData(0, 0, SIZE, SIZE).data);
  $("caption").textContent = file.name;
  runMask();
}

function guarded(fn) {
  return () => {
    if (!pixels) return show("load an image first", true);
    try {
      fn();
    } catch (e) {
      show(String(e.message ?? e), true);
    }
  };
}

const runMask = guarded(() => {
  const t = performance.now();
  const r = maskImage(pixels, SIZE, SIZE, Number($("patch").value), $("fixed").checked, $("edge").value,
    $("otn").checked, Number($("epoch").value), Number($("seed").value));
  const ms = performance.now() - t;
  paint("overlay", r.overlay);
  const stats = JSON.parse(r.stats);
  show(`${ms.toFixed(1)} ms\n` + JSON.stringify(stats, null, 2));
});

const runEdge = guarded(() => {
  const detector = $("edge").value === "none" ? "sobel" : $("edge").value;
  paint("edges", edgeMap(pixels, SIZE, SIZE, detector));
});

const runTrace = guarded(() => {
  const r = JSON.parse(sinkhornTrace(pixels, SIZE, SIZE, Number($("patch").value), Number($("epoch").value),
    Number($("seed").value), Number($("kernel").value), Number($("iters").value)));
  plotTrace(r.trace, r.tol);
  show(`n = ${r.n}, alpha = ${r.alpha.toFixed(3)}, ${r.iterations} passes, converged: ${r.converged}, final deviation ${r.deviation.toExponential(2)}`);
});

function plotTrace(trace, tol) {
  const c = $("trace");
  const ctx = c.getContext("2d");
  const pad = 30;
  ctx.clearRect(0, 0, c.width, c.height);
  const logs = trace.map((d) => Math.log10(Math.max(d, 1e-17)));
  const lo = Math.min(Math.log10(tol) - 1, ...logs);
  const hi = Math.max(0, ...logs);
  const x = (i) => pad + (i / Math.max(trace.length - 1, 1)) * (c.width - 2 * pad);
  const y = (v) => c.height - pad - ((v - lo) / (hi - lo || 1)) * (c.height - 2 * pad);

  ctx.strokeStyle = "#c33";
  ctx.setLineDash([4, 4]);
  ctx.beginPath();
  ctx.moveTo(pad, y(Math.log10(tol)));
  ctx.lineTo(c.width - pad, y(Math.log10(tol)));
  ctx.stroke();
  ctx.setLineDash([]);

  ctx.strokeStyle = "#236";
  ctx.beginPath();
  logs.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();

  ctx.fillStyle = "#222";
  ctx.fillText(`1e${Math.round(hi)}`, 2, y(hi) + 4);
  ctx.fillText(`1e${Math.round(lo)}`, 2, y(lo));
  ctx.fillText(`${trace.length} passes`, c.width - pad - 50, c.height - 8);
}

await init();
$("load-sample").onclick = loadSample;
$("file").onchange = (e) => e.target.files[0] && loadFile(e.target.files[0]);
$("run-mask").onclick = runMask;
$("run-edge").onclick = runEdge;
$("run-trace").onclick = runTrace;
$("epoch").oninput = () => ($("epoch-val").textContent = $("epoch").value);
loadSample();
