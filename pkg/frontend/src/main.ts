/** Browser entry: wire the session client to the page. */

import { SessionClient } from "./client.js";
import { render } from "./render.js";

function browserSocket(url: string) {
  return new WebSocket(url);
}

export function mount(root: HTMLElement, serverUrl: string): SessionClient {
  const client = new SessionClient(browserSocket as never);
  const draw = () => {
    root.innerHTML = render(client.store.state);
    for (const row of root.querySelectorAll<HTMLElement>(".skill-row")) {
      const button = row.querySelector("button");
      button?.addEventListener("click", () => {
        const skill = row.dataset.skill as string;
        const selects = [...row.querySelectorAll("select")];
        const relation = selects.find((s) => s.dataset.slot === "relation")?.value;
        const values = selects
          .filter((s) => s.dataset.slot !== "relation")
          .map((s) => s.value);
        let args: string[];
        if (skill === "Place" || skill === "Rearrange") {
          const [obj, furniture, reference] = values;
          args = reference
            ? [obj, relation ?? "on", furniture, "next_to", reference]
            : [obj, relation ?? "on", furniture, "none", "none"];
        } else {
          args = values;
        }
        client.sendCommand({ skill, args }).catch(() => undefined);
      });
    }
    root.querySelector<HTMLButtonElement>(".retry[data-enabled='true']")
      ?.addEventListener("click", () => void client.sendRetry());
  };
  client.onUpdate(draw);
  client.connect(serverUrl).then(draw, (error) => {
    root.innerHTML = `<div class="error">connection failed: ${String(error)}
      <button id="reconnect">retry</button></div>`;
    root.querySelector("#reconnect")?.addEventListener("click", () => {
      void client.reconnect(serverUrl).then(draw);
    });
  });
  return client;
}

declare global {
  interface Window {
    collabsimMount: typeof mount;
  }
}

if (typeof window !== "undefined") {
  window.collabsimMount = mount;
}
