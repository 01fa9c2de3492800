import { describe, expect, it } from "vitest";

import { render } from "../src/render.js";
import { initialState, reduce, replay, SessionStore } from "../src/store.js";
import { ServerMessage } from "../src/protocol.js";

const init: ServerMessage = {
  kind: "session_init",
  protocol: 1,
  session: 0,
  episode: "temporal_000",
  instruction: "First, move the vase. Then, move the book.",
  agent: "agent_1",
  role: "human",
  world: "Furniture:\nkitchen_1: floor_kitchen_1, table_1\n\nObjects:\nNo objects found yet",
  entities: {
    objects: ["vase_0", "book_1"],
    furniture: ["table_1", "table_2", "floor_kitchen_1"],
    rooms: ["kitchen_1"],
  },
  skills: ["Navigate", "Pick", "Place", "Rearrange", "Wait", "Done"],
  retries_left: 3,
};

const diff: ServerMessage = {
  kind: "state_diff",
  step: 12,
  objects: [
    {
      name: "vase_0",
      category: "vase",
      parent: "table_1",
      relation: "on",
      room: "kitchen_1",
      states: [],
    },
  ],
  furniture: [{ name: "cabinet_1", open: true }],
  agents: [{ name: "agent_1", room: "kitchen_1", held: null, position: [0, 0] }],
};

const result: ServerMessage = {
  kind: "result",
  step: 12,
  call: "Rearrange[vase_0, on, table_1, none, none]",
  status: "success",
  message: "Result: Successful execution!",
};

const partner: ServerMessage = {
  kind: "partner_action",
  step: 14,
  agent: "agent_0",
  call: "Navigate[table_2]",
  status: "success",
};

const report: ServerMessage = {
  kind: "report",
  success: false,
  percent_complete: 0.5,
  explanation: "- is_on_top(['book_1'], ['table_2']): out of temporal order",
  sim_steps: 140,
  termination: "AllDone",
  retries_left: 2,
};

describe("view state is a pure function of the message stream", () => {
  const stream = [init, diff, result, partner, report];

  it("replay renders identically", () => {
    const once = render(replay(stream));
    const twice = render(replay(stream));
    expect(once).toBe(twice);
  });

  it("reduce never mutates its input", () => {
    const before = replay([init, diff]);
    const snapshot = JSON.stringify(before);
    reduce(before, result);
    expect(JSON.stringify(before)).toBe(snapshot);
  });

  it("resume after a drop rebuilds the same view", () => {
    const store = new SessionStore();
    for (const message of stream.slice(0, 3)) store.apply(message);
    const rendered = render(store.state);
    const resumed = render(store.resume());
    expect(resumed).toBe(rendered);
  });
});

describe("view content", () => {
  it("lobby and running phases", () => {
    expect(render(reduce(initialState(), { kind: "lobby", waiting_for: "partner" })))
      .toContain("Waiting for your partner");
    const running = replay([init, diff]);
    const html = render(running);
    expect(html).toContain("temporal_000");
    expect(html).toContain("First, move the vase.");
    expect(html).toContain('data-room="kitchen_1"');
    expect(html).toContain("vase_0"); // chip on table_1
    expect(html).toContain("step 12");
  });

  it("discovered objects enter the pickers, undiscovered stay out", () => {
    const state = replay([
      { ...init, entities: { ...init.entities, objects: [] } },
      diff,
    ]);
    expect(state.entities.objects).toEqual(["vase_0"]);
    const html = render(state);
    expect(html).toContain("<option>vase_0</option>");
    expect(html).not.toContain("<option>book_1</option>");
  });

  it("palette locks on send and unlocks on result", () => {
    const store = new SessionStore();
    store.apply(init);
    store.lockPalette();
    expect(render(store.state)).toContain("palette locked");
    store.apply(result);
    expect(render(store.state)).not.toContain("palette locked");
    expect(store.state.ownLog[0]).toContain("Result: Successful execution!");
  });

  it("partner feed keeps the partner's completed calls", () => {
    const state = replay([init, partner]);
    expect(state.partnerFeed[0]).toContain("Navigate[table_2]");
  });

  it("report screen: failure explanation and retry button states", () => {
    const failed = replay([init, report]);
    let html = render(failed);
    expect(html).toContain("Incomplete — PC 50%");
    expect(html).toContain("out of temporal order");
    expect(html).toContain('data-enabled="true"');

    const exhausted = replay([init, { ...report, retries_left: 0 }]);
    html = render(exhausted);
    expect(html).toContain('data-enabled="false"');
    expect(html).toContain("No retries left");

    const succeeded = replay([
      init,
      { ...report, success: true, percent_complete: 1.0, explanation: "" },
    ]);
    expect(render(succeeded)).toContain("Success — PC 100%");
  });

  it("state badges render on object chips", () => {
    const withStates = replay([
      init,
      {
        ...diff,
        objects: [{ ...diff.objects[0], states: ["filled", "clean"] }],
      } as ServerMessage,
    ]);
    const html = render(withStates);
    expect(html).toContain('<sup class="badge">filled</sup>');
  });
});
