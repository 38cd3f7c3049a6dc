// Thin websocket wrapper: callbacks in, JSON frames out.

import { WireMessage, decodeMessage, encodeMessage } from './protocol.js';

export interface ClientHandlers {
  onOpen?: () => void;
  onClose?: () => void;
  onMessage?: (msg: WireMessage) => void;
  onDecodeError?: (raw: string, error: unknown) => void;
}

export interface ConsoleClient {
  connect: () => void;
  disconnect: () => void;
  send: (msg: WireMessage) => boolean;
  isOpen: () => boolean;
}

export function createClient(url: string, handlers: ClientHandlers = {}): ConsoleClient {
  let ws: WebSocket | null = null;

  return {
    connect() {
      if (ws) return;
      ws = new WebSocket(url);
      ws.addEventListener('open', () => handlers.onOpen?.());
      ws.addEventListener('close', () => {
        ws = null;
        handlers.onClose?.();
      });
      ws.addEventListener('message', (event) => {
        const raw = typeof event.data === 'string' ? event.data : '';
        try {
          handlers.onMessage?.(decodeMessage(raw));
        } catch (e) {
          handlers.onDecodeError?.(raw, e);
        }
      });
    },
    disconnect() {
      ws?.close();
      ws = null;
    },
    send(msg: WireMessage) {
      if (!ws || ws.readyState !== WebSocket.OPEN) return false;
      ws.send(encodeMessage(msg));
      return true;
    },
    isOpen: () => ws !== null && ws.readyState === WebSocket.OPEN,
  };
}
