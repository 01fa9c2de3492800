import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  composeCall,
  FIVE_FIELD_SKILLS,
  NO_ARG_SKILLS,
  optionsFor,
  parseGrammarDump,
  SINGLE_ARG_SKILLS,
  terminals,
  validateCall,
} from "../src/grammar.js";

const dump = JSON.parse(
  readFileSync(new URL("./fixtures/grammar_dump.json", import.meta.url), "utf-8")
) as { human: string; robot: string };

describe("mirror grammar against the recorded server dump", () => {
  const human = parseGrammarDump(dump.human);
  const robot = parseGrammarDump(dump.robot);

  it("extracts terminal sets and skills", () => {
    expect(human.rooms).toContain("kitchen_1");
    expect(human.furniture.length).toBeGreaterThan(10);
    expect(human.skills).toContain("Fill");
    expect(robot.skills).not.toContain("Fill");
    expect(robot.skills).not.toContain("Clean");
  });

  it("every composable palette command validates", () => {
    const sets = human;
    let checked = 0;
    for (const skill of human.skills) {
      const spec = optionsFor(skill, sets);
      if (spec.slots === null) continue;
      if (NO_ARG_SKILLS.includes(skill)) {
        expect(validateCall(composeCall({ skill, args: [] }), sets, human.skills)).toBe(true);
        checked += 1;
      } else if (skill in SINGLE_ARG_SKILLS) {
        for (const value of terminals(sets, SINGLE_ARG_SKILLS[skill]).slice(0, 5)) {
          expect(validateCall(composeCall({ skill, args: [value] }), sets, human.skills)).toBe(true);
          checked += 1;
        }
      } else if (FIVE_FIELD_SKILLS.includes(skill)) {
        const obj = sets.objects[0];
        const furniture = sets.furniture[0];
        const reference = sets.objects[1] ?? sets.furniture[1];
        for (const relation of ["on", "within"]) {
          for (const tail of [
            ["none", "none"],
            ["next_to", reference],
          ]) {
            const call = composeCall({ skill, args: [obj, relation, furniture, ...tail] });
            expect(validateCall(call, sets, human.skills)).toBe(true);
            checked += 1;
          }
        }
      }
    }
    expect(checked).toBeGreaterThan(30);
  });

  it("rejects unknown entities and malformed calls", () => {
    expect(validateCall("Pick[ghost_99]", human, human.skills)).toBe(false);
    expect(validateCall("Pick[]", human, human.skills)).toBe(false);
    expect(validateCall("Fill[" + human.furniture[0] + "]", human, human.skills)).toBe(false);
    expect(validateCall("Hop[" + human.objects[0] + "]", human, human.skills)).toBe(false);
    expect(
      validateCall(
        `Place[${human.objects[0]}, under, ${human.furniture[0]}, none, none]`,
        human,
        human.skills
      )
    ).toBe(false);
    expect(
      validateCall(`Place[${human.objects[0]}, on, ${human.furniture[0]}, none]`, human, human.skills)
    ).toBe(false);
  });

  it("role gate: the robot skill list omits state-modifying skills", () => {
    for (const skill of ["Clean", "Fill", "Pour", "PowerOn", "PowerOff"]) {
      expect(robot.skills).not.toContain(skill);
      expect(validateCall(`${skill}[${robot.objects[0]}]`, robot, robot.skills)).toBe(false);
    }
  });
});
