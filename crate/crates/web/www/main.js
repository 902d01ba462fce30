import init, { score_builtin, builtin_angles, FillDemo, planted_search } from "./pkg/airway_web.js";

const $ = (id) => document.getElementById(id);
const pct = (x) => (100 * x).toFixed(2) + "%";

function showError(el, e) {
  el.innerHTML = "";
  const span = document.createElement("span");
  span.className = "err";
  span.textContent = String(e);
  el.appendChild(span);
}

function angleInputs() {
  const box = $("angle-inputs");
  box.innerHTML = "";
  for (const code of builtin_angles($("model").value).split(",")) {
    const l = document.createElement("label");
    l.textContent = code + " ";
    const i = document.createElement("input");
    i.type = "number";
    i.step = "0.1";
    i.value = "0";
    l.appendChild(i);
    box.appendChild(l);
  }
}

function score() {
  const values = Float64Array.from([...$("angle-inputs").querySelectorAll("input")].map((i) => Number(i.value)));
  try {
    const r = JSON.parse(score_builtin($("model").value, values));
    $("score-out").textContent =
      `rotated: ${r.rotated.map((v) => v.toFixed(3)).join(", ")}\nscore: ${r.score.toFixed(4)}\nlabel: ${r.label_name}`;
  } catch (e) {
    showError($("score-out"), e);
  }
}

let demo = null;

function draw() {
  if (!demo) return;
  const z = Number($("slice").value);
  $("slice-n").textContent = `${z} / ${demo.slices() - 1}`;
  const w = demo.width(), h = demo.height();
  const canvas = $("view");
  canvas.width = w;
  canvas.height = h;
  const img = new ImageData(new Uint8ClampedArray(demo.slice_rgba(z)), w, h);
  canvas.getContext("2d").putImageData(img, 0, 0);
}

function build() {
  try {
    if (demo) demo.free();
    demo = new FillDemo(Number($("a1").value), Number($("a2").value), Number($("pin").value));
    $("slice").max = demo.slices() - 1;
    $("slice").value = demo.suggested_slice();
    $("fill").disabled = false;
    $("fill-out").textContent = "generated; press Fill";
    draw();
  } catch (e) {
    demo = null;
    $("fill").disabled = true;
    showError($("fill-out"), e);
  }
}

function fill() {
  try {
    const r = JSON.parse(demo.fill(Number($("hole").value), $("shield").checked));
    $("fill-out").textContent =
      `lumen ${r.lumen} voxels (true airway ${r.true_lumen}), leaked ${r.leaked}, exterior ${r.parenchyma}`;
    draw();
  } catch (e) {
    showError($("fill-out"), e);
  }
}

function search() {
  $("search-out").textContent = "searching...";
  // let the message paint before the blocking call
  setTimeout(() => {
    try {
      const r = JSON.parse(planted_search(BigInt($("seed").value), Number($("gap").value), Number($("size").value)));
      const rows = r.sizes.map((s) =>
        `<tr><td>${s.size}</td><td>${s.angles.join(", ")}</td><td>${pct(s.accuracy)}</td>` +
        `<td>${pct(s.sensitivity)}</td><td>${pct(s.specificity)}</td><td>${s.k}</td><td>${s.subsets}</td></tr>`);
      $("search-out").innerHTML =
        `<p>planted: ${r.planted.join(", ")}</p><table><tr><th>Size</th><th>Angles</th><th>Accuracy</th>` +
        `<th>Sensitivity</th><th>Specificity</th><th>PCs</th><th>Subsets</th></tr>${rows.join("")}</table>`;
    } catch (e) {
      showError($("search-out"), e);
    }
  }, 20);
}

await init();
angleInputs();
$("model").onchange = angleInputs;
$("score").onclick = score;
$("build").onclick = build;
$("fill").onclick = fill;
$("slice").oninput = draw;
$("search").onclick = search;
