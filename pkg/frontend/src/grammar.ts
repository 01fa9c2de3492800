/** Client-side mirror of the server's dynamic tool-call grammar.
 *
 * The palette composes calls only from entities the agent has observed, so
 * every transmitted string lies inside the server grammar's language. The
 * validator here is used defensively before send and by the mirror tests
 * against the server's grammar dump.
 */

import { EntitySets } from "./protocol.js";

export const STATE_MODIFYING_SKILLS = ["Clean", "Fill", "Pour", "PowerOn", "PowerOff"];

export type SlotClass = "object" | "furniture" | "room" | "nav_target" | "obj_or_furniture";

/** Argument template per skill; Place/Rearrange are handled separately. */
export const SINGLE_ARG_SKILLS: Record<string, SlotClass> = {
  Navigate: "nav_target",
  Pick: "object",
  Open: "furniture",
  Close: "furniture",
  PowerOn: "obj_or_furniture",
  PowerOff: "obj_or_furniture",
  Clean: "obj_or_furniture",
  Fill: "object",
  Pour: "object",
  Explore: "room",
};

export const NO_ARG_SKILLS = ["Wait", "Done"];
export const FIVE_FIELD_SKILLS = ["Place", "Rearrange"];

export function terminals(sets: EntitySets, slot: SlotClass): string[] {
  switch (slot) {
    case "object":
      return sets.objects;
    case "furniture":
      return sets.furniture;
    case "room":
      return sets.rooms;
    case "nav_target":
      return [...sets.furniture, ...sets.rooms, ...sets.objects];
    case "obj_or_furniture":
      return [...sets.furniture, ...sets.objects];
  }
}

export interface Composition {
  skill: string;
  args: string[];
}

/** Canonical call string; the server accepts one space after each comma. */
export function composeCall(c: Composition): string {
  return `${c.skill}[${c.args.join(", ")}]`;
}

export function validateCall(
  text: string,
  sets: EntitySets,
  skills: string[]
): boolean {
  const match = /^([A-Za-z]+)\[(.*)\]$/.exec(text);
  if (!match) return false;
  const [, skill, body] = match;
  if (!skills.includes(skill)) return false;

  if (NO_ARG_SKILLS.includes(skill)) return body === "";

  if (skill in SINGLE_ARG_SKILLS) {
    return terminals(sets, SINGLE_ARG_SKILLS[skill]).includes(body);
  }

  if (FIVE_FIELD_SKILLS.includes(skill)) {
    const parts = body.split(",").map((p) => p.replace(/^ +/, ""));
    if (parts.length !== 5) return false;
    const [obj, relation, furniture, constraint, reference] = parts;
    if (!sets.objects.includes(obj)) return false;
    if (relation !== "on" && relation !== "within") return false;
    if (!sets.furniture.includes(furniture)) return false;
    const none = (v: string) => v === "none" || v === "None";
    if (none(constraint)) return none(reference);
    if (constraint !== "next_to") return false;
    return terminals(sets, "obj_or_furniture").includes(reference);
  }
  return false;
}

/** All compositions the palette may offer for one skill. */
export function optionsFor(
  skill: string,
  sets: EntitySets
): { slots: SlotClass[] | null; relations?: string[] } {
  if (NO_ARG_SKILLS.includes(skill)) return { slots: [] };
  if (skill in SINGLE_ARG_SKILLS) return { slots: [SINGLE_ARG_SKILLS[skill]] };
  if (FIVE_FIELD_SKILLS.includes(skill)) {
    return { slots: ["object", "furniture", "obj_or_furniture"], relations: ["on", "within"] };
  }
  return { slots: null };
}

/** Terminal sets parsed out of the server's BNF dump (mirror testing). */
export function parseGrammarDump(dump: string): EntitySets & { skills: string[] } {
  const sets: EntitySets & { skills: string[] } = {
    objects: [],
    furniture: [],
    rooms: [],
    skills: [],
  };
  for (const line of dump.split("\n")) {
    const m = /^(\w+) ::= (.*)$/.exec(line);
    if (!m) continue;
    const [, rule, rhs] = m;
    const values = [...rhs.matchAll(/"([^"]*)"/g)].map((v) => v[1]);
    if (rule === "object") sets.objects = values.filter((v) => v !== "");
    else if (rule === "furniture") sets.furniture = values;
    else if (rule === "room") sets.rooms = values;
    else if (rule === "root") sets.skills = rhs.split("|").map((s) => s.trim());
  }
  return sets;
}
