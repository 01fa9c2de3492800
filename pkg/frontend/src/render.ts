/** Schematic renderer: view state in, HTML string out.
 *
 * Rooms are panels, furniture are icons, objects are chips with state
 * badges. Rendering is a pure function so replayed streams render
 * identically.
 */

import { optionsFor, terminals } from "./grammar.js";
import { ViewState } from "./store.js";

const FURNITURE_ICONS: Record<string, string> = {
  table: "▭",
  counter: "▭",
  chair: "⑁",
  stool: "⑁",
  bed: "▤",
  couch: "▤",
  shelves: "☰",
  cabinet: "◰",
  chest_of_drawers: "◰",
  wardrobe: "◰",
  fridge: "◳",
  toilet: "◍",
  stand: "▯",
  floor: "·",
};

function category(name: string): string {
  const match = /^(.*)_\d+$/.exec(name);
  return match ? match[1] : name;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function roomOfFurniture(state: ViewState, furniture: string): string {
  if (furniture.startsWith("floor_")) return furniture.slice("floor_".length);
  for (const record of Object.values(state.objects)) {
    if (record.parent === furniture) return record.room;
  }
  return "";
}

function furnitureByRoom(state: ViewState): Map<string, string[]> {
  const byRoom = new Map<string, string[]>();
  for (const room of state.entities.rooms) byRoom.set(room, []);
  for (const furniture of state.entities.furniture) {
    const room =
      roomOfFurniture(state, furniture) ||
      state.entities.rooms.find((r) => furniture.endsWith(r)) ||
      guessRoom(state, furniture);
    const bucket = byRoom.get(room);
    if (bucket) bucket.push(furniture);
    else byRoom.set(room, [furniture]);
  }
  return byRoom;
}

function guessRoom(state: ViewState, furniture: string): string {
  // floor pseudo-furniture encodes its room; everything else lands in an
  // "elsewhere" panel until a state_diff places an object there
  if (furniture.startsWith("floor_")) return furniture.slice("floor_".length);
  return state.entities.rooms[0] ?? "house";
}

export function renderFloorPlan(state: ViewState): string {
  const byRoom = furnitureByRoom(state);
  const panels: string[] = [];
  for (const [room, furnitureList] of byRoom) {
    const items = furnitureList
      .filter((f) => !f.startsWith("floor_"))
      .map((f) => {
        const icon = FURNITURE_ICONS[category(f)] ?? "▫";
        const open = state.furnitureOpen[f];
        const badge = open === undefined ? "" : open ? " <em>open</em>" : " <em>closed</em>";
        const chips = Object.values(state.objects)
          .filter((o) => o.parent === f)
          .map(
            (o) =>
              `<span class="chip" data-object="${o.name}">${escapeHtml(o.name)}` +
              o.states.map((s) => `<sup class="badge">${s}</sup>`).join("") +
              `</span>`
          )
          .join("");
        return `<li class="furniture" data-name="${f}">${icon} ${escapeHtml(f)}${badge}${chips}</li>`;
      })
      .join("");
    const floorChips = Object.values(state.objects)
      .filter((o) => o.parent === `floor_${room}`)
      .map((o) => `<span class="chip">${escapeHtml(o.name)} (floor)</span>`)
      .join("");
    const agents = Object.values(state.agents)
      .filter((a) => a.room === room)
      .map((a) => `<span class="agent">☺ ${a.name}${a.held ? ` holding ${a.held}` : ""}</span>`)
      .join("");
    panels.push(
      `<section class="room" data-room="${room}"><h3>${escapeHtml(room)}</h3>` +
        `<ul>${items}</ul>${floorChips}${agents}</section>`
    );
  }
  return `<div class="floorplan">${panels.join("")}</div>`;
}

export function renderPalette(state: ViewState): string {
  if (state.phase !== "running" || state.paletteLocked) {
    return `<div class="palette locked">waiting…</div>`;
  }
  const rows = state.skills
    .map((skill) => {
      const spec = optionsFor(skill, state.entities);
      if (spec.slots === null) return "";
      const pickers = spec.slots
        .map((slot) => {
          const values = terminals(state.entities, slot)
            .map((v) => `<option>${escapeHtml(v)}</option>`)
            .join("");
          return `<select data-slot="${slot}">${values}</select>`;
        })
        .join("");
      const relations = spec.relations
        ? `<select data-slot="relation">${spec.relations
            .map((r) => `<option>${r}</option>`)
            .join("")}</select>`
        : "";
      return `<div class="skill-row" data-skill="${skill}"><button>${skill}</button>${relations}${pickers}</div>`;
    })
    .join("");
  return `<div class="palette">${rows}</div>`;
}

export function renderFeeds(state: ViewState): string {
  const own = state.ownLog.map((line) => `<li>${escapeHtml(line)}</li>`).join("");
  const partner = state.partnerFeed.map((line) => `<li>${escapeHtml(line)}</li>`).join("");
  return (
    `<div class="feeds"><div class="own"><h4>Your actions</h4><ul>${own}</ul></div>` +
    `<div class="partner"><h4>Partner activity</h4><ul>${partner}</ul></div>` +
    `<div class="counters">step ${state.step} · retries left ${state.retriesLeft}</div></div>`
  );
}

export function renderReport(state: ViewState): string {
  const report = state.report;
  if (!report) return "";
  const pc = Math.round(report.percent_complete * 100);
  const badge = report.success
    ? `<div class="badge success">Success — PC ${pc}%</div>`
    : `<div class="badge failure">Incomplete — PC ${pc}%</div>`;
  const feedback = report.explanation
    ? `<pre class="feedback">${escapeHtml(report.explanation)}</pre>`
    : "";
  const retry =
    state.retriesLeft > 0
      ? `<button class="retry" data-enabled="true">Retry (${state.retriesLeft} left)</button>`
      : `<button class="retry" data-enabled="false" disabled>No retries left</button>`;
  return `<div class="report">${badge}${feedback}${retry}</div>`;
}

export function render(state: ViewState): string {
  if (state.phase === "lobby") {
    return `<div class="lobby">Waiting for your partner to join…</div>`;
  }
  if (state.phase === "connecting") {
    return `<div class="lobby">Connecting…</div>`;
  }
  const header = `<header><h2>${escapeHtml(state.episode)}</h2><p class="instruction">${escapeHtml(
    state.instruction
  )}</p></header>`;
  const body =
    state.phase === "finished"
      ? renderReport(state)
      : renderFloorPlan(state) + renderPalette(state);
  const error = state.error ? `<div class="error">${escapeHtml(state.error)}</div>` : "";
  return header + body + renderFeeds(state) + error;
}
