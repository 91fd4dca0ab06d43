import init, { DeskDemo, topicMatches } from "./pkg/xri_wasm_demo.js";

await init();
const desk = new DeskDemo();
const $ = (id) => document.getElementById(id);
const lines = [];

function log(text) {
  if (!text) return;
  lines.push(...text.split("\n"));
  lines.splice(0, Math.max(0, lines.length - 200));
  $("trace").textContent = lines.join("\n");
  $("trace").scrollTop = $("trace").scrollHeight;
}

function card(title, state, extra, glow) {
  const div = document.createElement("div");
  div.className = glow ? "card glow" : "card";
  div.innerHTML = `<h3>${title}</h3><div class="state">${state}</div>${extra}`;
  return div;
}

function render() {
  const snap = JSON.parse(desk.snapshot());
  $("now").textContent = (snap.now / 1000).toFixed(0);
  $("phase").textContent = snap.pomodoro.phase;
  $("ends").textContent = snap.pomodoro.phase_ends_ms == null ? "-" : (snap.pomodoro.phase_ends_ms / 1000).toFixed(0);
  const cards = $("cards");
  cards.replaceChildren();
  for (const [topic, msg] of Object.entries(snap.retained)) {
    const agent = topic.match(/^xri\/agent\/([^/]+)\/state$/);
    if (agent) {
      const o = msg.outputs || {};
      let extra = "";
      if ("avatar_scale" in o) {
        const px = Math.round(40 * o.avatar_scale);
        extra += `<div>avatar <span class="avatar" style="width:${px}px;height:${px}px"></span></div>`;
      }
      if (Array.isArray(o.led_color)) {
        extra += `<div>led <span class="swatch" style="background:rgb(${o.led_color.join(",")})"></span>${o.haptic_pulse ? " haptic pulse" : ""}</div>`;
      }
      if ("screen" in o) extra += `<div>screen ${o.screen}${o.notifications ? ", notifications" : ""}</div>`;
      cards.append(card(agent[1], msg.state, extra, o.ambient_effect === true));
    } else if (topic.endsWith("/situation")) {
      const alerts = msg.plant_alerts.length ? msg.plant_alerts.join(", ") : "no plant alerts";
      cards.append(card(`situation in ${msg.zone}`, msg.user_mode, `<div>${alerts}</div>`, false));
    }
  }
}

function observe(kind, value) {
  try {
    log(desk.observe(kind, String(value)));
  } catch (e) {
    log(`error: ${e.message}`);
  }
  render();
}

$("presence").addEventListener("change", (e) => observe("presence", e.target.checked));
$("light").addEventListener("change", (e) => observe("light", e.target.checked));
$("activity").addEventListener("change", (e) => observe("activity", e.target.value));
$("moisture").addEventListener("input", (e) => {
  $("moisture-value").textContent = Number(e.target.value).toFixed(2);
});
$("moisture").addEventListener("change", (e) => observe("moisture", e.target.value));
for (const b of document.querySelectorAll("[data-advance]")) {
  b.addEventListener("click", () => {
    log(desk.advance(Number(b.dataset.advance)));
    render();
  });
}

function checkTopic() {
  const out = $("match");
  try {
    const m = topicMatches($("filter").value, $("topic").value);
    out.textContent = m ? "matches" : "does not match";
    out.className = m ? "ok" : "";
  } catch (e) {
    out.textContent = e.message;
    out.className = "bad";
  }
}
$("filter").addEventListener("input", checkTopic);
$("topic").addEventListener("input", checkTopic);

render();
checkTopic();
