/** Session client: transport, command flow, and retry handling.
 *
 * The socket factory is injectable so tests can run under node (ws package)
 * while the browser uses the native WebSocket.
 */

import { composeCall, validateCall, Composition } from "./grammar.js";
import { ClientMessage, PROTOCOL_VERSION, ServerMessage } from "./protocol.js";
import { SessionStore, ViewState } from "./store.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((error: unknown) => void) | null;
  onopen: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export class SessionClient {
  store = new SessionStore();
  private socket: SocketLike | null = null;
  private listeners: ((state: ViewState) => void)[] = [];
  private waiters: ((message: ServerMessage) => boolean)[] = [];
  connected = false;

  constructor(private factory: SocketFactory) {}

  onUpdate(listener: (state: ViewState) => void): void {
    this.listeners.push(listener);
  }

  connect(url: string): Promise<void> {
    return new Promise((resolve, reject) => {
      const socket = this.factory(url);
      this.socket = socket;
      socket.onopen = () => {
        this.connected = true;
        this.sendRaw({ kind: "hello", protocol: PROTOCOL_VERSION });
        resolve();
      };
      socket.onerror = (error) => {
        if (!this.connected) reject(error);
      };
      socket.onclose = () => {
        this.connected = false;
      };
      socket.onmessage = (event) => {
        const message = JSON.parse(String(event.data)) as ServerMessage;
        this.store.apply(message);
        this.notify();
        this.waiters = this.waiters.filter((accept) => !accept(message));
      };
    });
  }

  /** Reconnect after a drop: fresh socket, view restored from the log. */
  async reconnect(url: string): Promise<ViewState> {
    const state = this.store.resume();
    this.notify();
    await this.connect(url);
    return state;
  }

  private notify(): void {
    for (const listener of this.listeners) listener(this.store.state);
  }

  private sendRaw(message: ClientMessage): void {
    if (!this.socket) throw new Error("not connected");
    this.socket.send(JSON.stringify(message));
  }

  nextMessage(kind: string, timeoutMs = 30000): Promise<ServerMessage> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error(`timed out waiting for ${kind}`)),
        timeoutMs
      );
      this.waiters.push((message) => {
        if (message.kind === kind || message.kind === "error") {
          clearTimeout(timer);
          resolve(message);
          return true;
        }
        return false;
      });
    });
  }

  /** Validate against the mirror grammar, lock the palette, transmit. */
  sendCommand(composition: Composition): Promise<ServerMessage> {
    const text = composeCall(composition);
    const { entities, skills } = this.store.state;
    if (!validateCall(text, entities, skills)) {
      throw new Error(`composed call rejected by mirror grammar: ${text}`);
    }
    this.store.lockPalette();
    this.notify();
    const outcome =
      composition.skill === "Done"
        ? this.nextMessage("report")
        : this.nextMessage("result");
    this.sendRaw({ kind: "command", text });
    return outcome;
  }

  sendRetry(): Promise<ServerMessage> {
    const outcome = this.nextMessage("session_init");
    this.sendRaw({ kind: "retry" });
    return outcome;
  }

  close(): void {
    if (this.socket) {
      try {
        this.sendRaw({ kind: "bye" });
      } catch {
        // socket already gone
      }
      this.socket.close();
    }
  }
}
